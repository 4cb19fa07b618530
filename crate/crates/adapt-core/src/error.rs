use std::io;

/// Pipeline-wide error type. The CLI maps `Validation` to exit code 1 and
/// everything else to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    /// Malformed file structure (bad magic, unsupported version, bad header).
    #[error("format: {0}")]
    Format(String),
    /// Structurally valid prefix but truncated or inconsistent payload.
    #[error("corrupt: {0}")]
    Corrupt(String),
    /// Inputs that violate a declared contract (bad labels, bad config, ...).
    #[error("validation: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
