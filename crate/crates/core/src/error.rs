use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed a malformed value (non-finite action, arity mismatch, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Operation called in the wrong lifecycle state.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("scenario construction failed on map `{map}`: {reason}")]
    Scenario { map: String, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("checkpoint error in `{field}`: {reason}")]
    Checkpoint { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn checkpoint(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Checkpoint {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors that stem from configuration rather than runtime state.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
