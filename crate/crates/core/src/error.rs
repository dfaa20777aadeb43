use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("noise {kind}: {message}")]
    Noise { kind: String, message: String },

    #[error("adapter {adapter}: {message}")]
    Adapter { adapter: String, message: String },

    #[error("adapter {adapter}: timed out after {seconds:.1}s ({pending} responses pending)")]
    Timeout {
        adapter: String,
        seconds: f64,
        pending: usize,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn noise(kind: impl std::fmt::Display, msg: impl Into<String>) -> Self {
        Error::Noise {
            kind: kind.to_string(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Bad user input (files, plans, flags) as opposed to a failure while
    /// running an otherwise valid request. The CLI maps this onto exit codes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Invalid(_) | Error::Noise { .. }
        ) || matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
