//! File formats, scenarios, end-to-end pipelines and the command line for
//! [`possr_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod scenario;

pub use error::{AppError, Result};
pub use pipeline::{run_pipeline, run_sweep, PipelineOutput, PipelineReport, SweepAxis, SweepRow};
pub use scenario::{DeltapSpec, GeneratorSpec, Scenario, Truth};
