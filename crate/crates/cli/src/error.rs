use simfair::SimFairError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Runtime(_) => 4,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<SimFairError> for CliError {
    fn from(e: SimFairError) -> Self {
        match e {
            SimFairError::Config(m) => Self::Config(m),
            SimFairError::Data(_) | SimFairError::Format(_) | SimFairError::Dimension { .. } => {
                Self::Data(e.to_string())
            }
            SimFairError::UndefinedViolation | SimFairError::ZeroViolation => {
                Self::Runtime(e.to_string())
            }
        }
    }
}
