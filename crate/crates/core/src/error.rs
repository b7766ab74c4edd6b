use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// API misuse, e.g. a cache replayed against parameters that have since changed.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("out-of-order insert: timestamp {got} after {last}")]
    OutOfOrder { last: i64, got: i64 },

    #[error("{field}: value {value:?} is not in the frozen vocabulary")]
    UnknownValue { field: String, value: String },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema mismatch: checkpoint {expected}, data {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("AUC undefined: {positives} positive and {negatives} negative instances")]
    UndefinedAuc { positives: usize, negatives: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        norms: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }
}
