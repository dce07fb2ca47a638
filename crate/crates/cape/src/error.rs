//! Crate-wide error type.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration values (bad endpoints, unknown keys, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// Array shapes or structural metadata do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar argument is outside its valid range.
    #[error("out of range: {0}")]
    Range(String),

    /// Randomized generation exhausted its attempt budget.
    #[error("generation failed: {0}")]
    Generation(String),

    /// A persisted file is malformed; the detail names the offending field.
    #[error("invalid file {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn format(path: impl AsRef<Path>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
