use thiserror::Error;

pub type Result<T, E = SimFairError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimFairError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("fairness violation is undefined (a group has zero weight mass)")]
    UndefinedViolation,
    #[error("fairness violation is zero; its gradient is not defined")]
    ZeroViolation,
    #[error("unsupported model format: {0}")]
    Format(String),
}

impl SimFairError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(SimFairError::Dimension {
            context,
            expected,
            found,
        })
    }
}
