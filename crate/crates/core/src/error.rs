use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("scalar kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("field must have zero mean (mean = {mean:e})")]
    NonZeroMean { mean: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("non-finite state at t = {t}")]
    NumericalOverflow { t: f64 },

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
