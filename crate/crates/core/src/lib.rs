//! Positive super-resolution of two-dimensional atomic measures from
//! tensor-product images: forward model, gridded nonnegative least squares,
//! generalised Wasserstein distances, dual certificates and Chebyshev-system
//! checks.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod certificates;
pub mod chebyshev;
pub mod error;
pub mod imaging;
pub mod linalg;
pub mod lp;
pub mod measures;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
pub use imaging::{Basis, ImageObservation, Window};
pub use measures::{Atom, AtomicMeasure, Point};
pub use transport::{gen_wasserstein, GroundNorm, TransportPlan};
