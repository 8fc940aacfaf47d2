use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("config error in key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("criterion/sampler mismatch: {0}")]
    Mismatch(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("bad file format in {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user configuration rather than runtime state.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Mismatch(_) | Error::InvalidArgument { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
