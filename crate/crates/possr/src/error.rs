use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("solver did not reach the feasibility radius: residual {residual} > deltap {deltap}")]
    NotConverged { residual: f64, deltap: f64 },
    #[error("certificate verification failed: {0}")]
    Certificate(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        source: possr_core::Error,
    },
}

impl AppError {
    /// Process exit status: 2 for bad input, 3 when the solver misses δ′,
    /// 4 for failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::NotConverged { .. } => 3,
            AppError::Certificate(_) => 4,
            AppError::Core {
                source: possr_core::Error::Verification { .. },
                ..
            } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;

pub(crate) trait Context<T> {
    fn context(self, what: &str) -> Result<T>;
}

impl<T> Context<T> for possr_core::Result<T> {
    fn context(self, what: &str) -> Result<T> {
        self.map_err(|source| AppError::Core {
            context: what.to_string(),
            source,
        })
    }
}
