use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Runtime(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    /// 0 success, 1 runtime or verification failure, 2 usage or parse error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Parse { .. } => 2,
            Self::Runtime(_) | Self::Verification(_) => 1,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::Runtime(format!("{}: {err}", path.display()))
    }
}
