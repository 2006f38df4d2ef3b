use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary mismatch: expected {expected:#018x}, found {found:#018x}")]
    VocabMismatch { expected: u64, found: u64 },

    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(u32),

    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),

    #[error("passage is empty")]
    EmptyPassage,

    #[error("gold answer set is empty")]
    EmptyGolds,

    #[error("nothing to aggregate")]
    EmptyScores,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid language-model table: {0}")]
    InvalidTable(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid prompt template {id}: {reason}")]
    InvalidTemplate { id: u32, reason: String },

    #[error("scorer transport error: {0}")]
    Transport(String),

    #[error("malformed scorer reply: {0}")]
    MalformedReply(String),

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset has {available} usable examples but a split of {requested} was requested")]
    DatasetTooSmall { available: usize, requested: usize },

    #[error("passage of training example {0} also appears in the validation set")]
    Leakage(String),

    #[error("best averaged score for size index {0} is not positive; normalization undefined")]
    NormalizationUndefined(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the scorer connection rather than of the data.
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport(_) | Error::MalformedReply(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
