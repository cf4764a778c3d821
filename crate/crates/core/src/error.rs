use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}` in header row")]
    MissingColumn(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("document is empty: term frequency divides by the document length")]
    EmptyDocument,

    #[error("term `{0}` is not in the vocabulary")]
    UnknownTerm(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {0} is out of range for binary classification")]
    LabelOutOfRange(usize),

    #[error(
        "negative feature value {value} in column {column}: multinomial naive Bayes works on \
         non-negative conditional probabilities, so signed features (e.g. word embeddings) \
         cannot be used"
    )]
    NegativeFeature { column: usize, value: f64 },

    #[error("feature dimension mismatch: model was fit on {expected} features, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model container: {0}")]
    Container(String),

    #[error("{what} hash mismatch: container has {expected}, active pipeline has {found}")]
    HashMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
