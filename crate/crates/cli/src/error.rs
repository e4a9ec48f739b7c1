use brsl::BrslError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] BrslError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                BrslError::InvalidConfig(_) | BrslError::Domain(_) | BrslError::InsufficientWarmup { .. } => 2,
                // Anything wrong with the bytes on disk, including rows that
                // disagree with the header or with each other.
                BrslError::Io(_)
                | BrslError::Parse(_)
                | BrslError::NonFiniteInput(_)
                | BrslError::DimensionMismatch(_)
                | BrslError::TimestampMismatch(_) => 3,
                BrslError::ConditionViolated(_) => 4,
                _ => 1,
            },
        }
    }
}
