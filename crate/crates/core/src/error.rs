use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrslError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("precision condition violated: numerator variance {numerator} must be smaller than denominator variance {denominator}")]
    PrecisionViolation { numerator: f64, denominator: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("information matrix is singular or indefinite: {0}")]
    SingularInformation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient warmup: need at least {needed} samples, got {got}")]
    InsufficientWarmup { needed: usize, got: usize },

    #[error("recursive condition violated: {0}")]
    ConditionViolated(String),

    #[error("simulated state became non-finite at t = {0}")]
    NonFiniteState(f64),

    #[error("timestamp mismatch: {0}")]
    TimestampMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, BrslError>;

impl From<std::io::Error> for BrslError {
    fn from(e: std::io::Error) -> Self {
        BrslError::Io(e.to_string())
    }
}

impl From<csv::Error> for BrslError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            BrslError::Io(e.to_string())
        } else {
            BrslError::Parse(e.to_string())
        }
    }
}

impl From<serde_json::Error> for BrslError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            BrslError::Io(e.to_string())
        } else {
            BrslError::Parse(e.to_string())
        }
    }
}
