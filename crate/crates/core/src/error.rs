use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },

    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format { format, reason: reason.into() }
    }
}
