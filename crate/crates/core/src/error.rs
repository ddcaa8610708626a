use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("catalog is empty")]
    EmptyCatalog,

    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),

    #[error("invalid item {item_id:?}: {message}")]
    InvalidItem { item_id: String, message: String },

    #[error(
        "hierarchy violation: level-{level} category {child:?} has parents {first:?} and {second:?}"
    )]
    HierarchyViolation {
        level: usize,
        child: String,
        first: String,
        second: String,
    },

    #[error("invalid branching shape: {0}")]
    InvalidShape(String),

    #[error("catalog has {found} level-1 categories, need at least {required}")]
    TooFewCategories { found: usize, required: usize },

    #[error("unparseable agent response")]
    Unparseable,

    #[error("unknown feedback type {0:?}")]
    UnknownFeedback(String),

    #[error("llm transport error: {0}")]
    Transport(String),

    #[error("{kind} index {index} out of range (size {size})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        size: usize,
    },

    #[error("duplicate active feature index {0}")]
    DuplicateFeature(usize),

    #[error("empty sample list")]
    EmptySamples,

    #[error("non-finite loss at epoch {epoch}, sample {sample}")]
    NonFiniteLoss { epoch: usize, sample: usize },

    #[error("need {required} candidates, only {available} available")]
    InsufficientCandidates { required: usize, available: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty record list")]
    EmptyRecords,

    #[error("metric input: {0}")]
    InvalidMetricInput(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("corrupt run log: {0}")]
    CorruptLog(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
