use std::io;

use thiserror::Error;

/// Errors produced by the library.
///
/// The CLI maps [`Error::Io`] and [`Error::Format`] to exit code 2 and every
/// other variant to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Geometric input too degenerate for the requested operation.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// A loss term became NaN or infinite during fitting.
    #[error("non-finite value in term `{term}` at iteration {iteration}")]
    NonFinite { term: String, iteration: usize },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Malformed file content (bad magic, schema violation, parse failure).
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by reading or decoding external files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Format(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Format(e.to_string())
        }
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Format(other.to_string()),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            }
        } else {
            Error::Format(e.to_string())
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Fails with a contract error unless `cond` holds.
pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}
