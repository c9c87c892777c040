use thiserror::Error;

/// Crate-wide error type. `exit_code` maps variants onto the CLI contract:
/// 2 for invalid input, 3 for numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload size mismatch: header implies {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("unsupported datatype: {0}")]
    UnsupportedDtype(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::MalformedHeader(e.to_string())
    }
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
