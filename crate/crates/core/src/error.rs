use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimensions, probabilities or run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A call violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("instance too large for the exact solver: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TooLarge(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
