//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file did not match its documented layout.
    #[error("format error: {0}")]
    Format(String),

    /// A file uses an encoding this crate does not read.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// The requested quantity is undefined for the given input
    /// (e.g. HNR of a track with no voiced frames).
    #[error("undefined result: {0}")]
    UndefinedResult(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
