use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("grid resolution {resolution} is too coarse; need at least {required}")]
    Resolution { resolution: usize, required: usize },

    #[error("trajectory diverged at step {step}: non-finite state")]
    Divergence { step: usize },

    #[error("matrix is not positive definite (smallest eigenvalue estimate {min_eigenvalue:e})")]
    Conditioning { min_eigenvalue: f64 },

    #[error("unknown ground truth `{0}` (expected B1, B2 or B3)")]
    UnknownTruth(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
