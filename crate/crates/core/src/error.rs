use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("alphabet mismatch: dimension {left} vs {right}")]
    AlphabetMismatch { left: u8, right: u8 },
    #[error("incomplete signature: missing component for word {0}")]
    IncompleteSignature(String),
    #[error("singular fit: {0}")]
    SingularFit(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("size guard exceeded: {0}")]
    Guard(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
