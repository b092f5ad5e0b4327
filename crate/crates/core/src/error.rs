use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {location}: {reason}")]
    MalformedRecord { location: String, reason: String },

    #[error("unknown corpus format `{0}` (expected `jsonl` or `csv`)")]
    UnknownFormat(String),

    #[error("csv header must contain `text` and `label` columns, found {0:?}")]
    MissingColumn(Vec<String>),

    #[error("corpus has {found} class(es); at least 2 are required")]
    TooFewClasses { found: usize },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("label `{0}` is not in the corpus class set")]
    UnknownLabel(String),

    #[error("unknown stop-word list `{0}`")]
    UnknownStopList(String),

    #[error("class `{class}` has {have} document(s), need at least {need}")]
    ClassTooSmall {
        class: String,
        have: usize,
        need: usize,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("word `{0}` is not in the TF-IDF index")]
    UnindexedWord(String),

    #[error("no effective word exchange possible: {0}")]
    InfeasibleSwap(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("integrity check failed: stored digest {stored} != computed {computed}")]
    DigestMismatch { stored: String, computed: String },

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("cannot classify an empty token list")]
    EmptyInput,

    #[error("oracle failed on record `{doc_id}`: {reason}")]
    Oracle { doc_id: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.to_string(),
        }
    }
}
