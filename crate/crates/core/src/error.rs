use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hadamard order {0}: must be a power of two no larger than {max}", max = crate::hadamard::MAX_ORDER)]
    InvalidOrder(usize),

    #[error("codebook exhausted: all {order} codewords are assigned, cannot place label {label} (raise --max-labels)")]
    CodebookExhausted { order: usize, label: u32 },

    #[error("label {0} has no assigned codeword")]
    UnknownLabel(u32),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in model parameters at round {round}: {detail}")]
    NumericFailure { round: u64, detail: String },

    #[error("average precision is undefined: no relevant items and no cutoff")]
    UndefinedAp,

    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{what}: bad header: {detail}")]
    BadHeader { what: String, detail: String },

    #[error("{what}: truncated, expected {expected} bytes, found {actual}")]
    Truncated {
        what: String,
        expected: u64,
        actual: u64,
    },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    /// Process exit code: 2 config error, 3 data error, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidOrder(_)
            | Error::InvalidArgument(_)
            | Error::CodebookExhausted { .. }
            | Error::UnknownLabel(_) => 2,
            Error::NumericFailure { .. } => 4,
            _ => 3,
        }
    }
}
