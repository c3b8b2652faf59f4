use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested exact computation is outside the supported size.
    #[error("scale exceeded: {0}")]
    ScaleExceeded(String),

    #[error("pattern set is empty")]
    EmptyPatternSet,

    #[error("cone projection did not converge after {iterations} iterations (violation {violation:.3e}, residual {residual:.3e})")]
    ProjectionFailed {
        iterations: usize,
        violation: f64,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
