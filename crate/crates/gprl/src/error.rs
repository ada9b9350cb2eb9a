use thiserror::Error;

/// Errors returned by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GprlError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed on axis {axis}: {reason}")]
    PreconditionFailed { axis: usize, reason: String },

    #[error("evaluation failed: {0}")]
    EvaluationFailed(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, GprlError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(GprlError::InvalidArgument(msg.into()))
}
