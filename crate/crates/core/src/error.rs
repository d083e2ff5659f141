use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRate { expected: u32, actual: u32 },

    #[error("unsupported audio format in {path}: {reason}")]
    AudioFormat { path: PathBuf, reason: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config hash mismatch: checkpoint has {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },

    #[error("non-finite {what} at step {step} (batch ids: {ids:?})")]
    NonFinite { what: String, step: u64, ids: Vec<String> },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
