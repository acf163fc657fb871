use thiserror::Error;

/// Errors produced by the numerical kernels and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal {off:e})")]
    NotConverged { sweeps: usize, off: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("quadrature budget exhausted: value {value:e}, error estimate {error:e}")]
    QuadratureBudget { value: f64, error: f64 },

    #[error("spectrum has the wrong regime: expected {expected}, found {found}")]
    RegimeMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
