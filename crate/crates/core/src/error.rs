use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document has no layout blocks")]
    EmptyDocument,

    #[error("duplicate block id `{block_id}` in document `{doc_id}`")]
    DuplicateBlock { doc_id: String, block_id: String },

    #[error("block `{block_id}` belongs to document `{found}`, expected `{expected}`")]
    MixedDocuments {
        expected: String,
        found: String,
        block_id: String,
    },

    #[error("reading order not strictly increasing at block `{block_id}` in document `{doc_id}`")]
    NonMonotoneReadingOrder { doc_id: String, block_id: String },

    #[error("invalid block in document `{doc_id}`: {reason}")]
    InvalidBlock { doc_id: String, reason: String },

    #[error("node {0} is not part of this tree")]
    UnknownNode(usize),

    #[error("no embedding stored for key `{0}`")]
    MissingEmbedding(String),

    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("provider modality is {actual}, operation needs {expected}")]
    ModalityMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("embedding contains a non-finite value")]
    NonFiniteEmbedding,

    #[error("invalid embedder spec `{0}` (expected `hash:<dim>` or `file:<path>`)")]
    InvalidEmbedderSpec(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("score table is empty")]
    EmptyScoreTable,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("unit `{0}` has neither a crop embedding nor upper context")]
    ScorelessUnit(String),

    #[error("token budget must be positive, got {0}")]
    InvalidBudget(i64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("no index found at {0}")]
    MissingIndex(PathBuf),

    #[error("corrupt index file {path}: {reason}")]
    CorruptIndex { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's input rather than an engine defect.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::CorruptIndex { .. } | Error::Io(_))
    }
}
