use std::path::PathBuf;

use crate::attr::Attribute;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus not found: {0}")]
    CorpusNotFound(PathBuf),
    #[error("{context}: record {record}: {message}")]
    MalformedRecord {
        context: String,
        record: usize,
        message: String,
    },
    #[error("{attribute} value {value} is not representable in the vocabulary")]
    VocabOverflow { attribute: Attribute, value: f64 },
    #[error("empty sequence")]
    EmptySequence,
    #[error("sequence of length {0} is too short (need at least 2)")]
    SequenceTooShort(usize),
    #[error("too few samples: {found} (need at least {needed})")]
    TooFewSamples { found: usize, needed: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty table")]
    EmptyTable,
    #[error("embedding table parse failure at row {row}: {message}")]
    TableParse { row: usize, message: String },
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("control {feature} = {value} is outside [0, 1]")]
    InvalidControl { feature: String, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported file format version {0}")]
    UnsupportedVersion(u32),
    #[error("midi: {0}")]
    Midi(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
