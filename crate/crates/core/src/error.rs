use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::ChannelKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid window: {0}")]
    Window(String),

    #[error("codebook training failed for channel {channel}: {message}")]
    Training { channel: ChannelKey, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("cannot compose sensory words: {0}")]
    Composition(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot map topics to classes: {0}")]
    Mapping(String),

    #[error("topic model: {0}")]
    Model(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("serialization: {0}")]
    Serde(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
