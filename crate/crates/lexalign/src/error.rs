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

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("malformed row at {path}:{line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("non-finite value at {path}:{line}")]
    NonFinite { path: PathBuf, line: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("embedding space must have at least one word and one dimension")]
    EmptySpace,

    #[error("duplicate word in vocabulary: {0:?}")]
    DuplicateWord(String),

    #[error("malformed dictionary line at {path}:{line}: {reason}")]
    MalformedDictLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("dictionary has zero usable entries")]
    NoUsableEntries,

    #[error("row {row} has zero norm; cannot length-normalize")]
    ZeroRow { row: usize },

    #[error("rank-deficient matrix block: singular value {value:.3e} below threshold")]
    RankDeficient { value: f64 },

    #[error("singular covariance after regularization")]
    SingularCovariance,

    #[error("translation dictionary is empty")]
    EmptyDictionary,

    #[error("index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("neighborhood size k={k} out of range (must be 1..={max})")]
    KOutOfRange { k: usize, max: usize },

    #[error("row {row} is not length-normalized (norm {norm:.6})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("prediction coverage mismatch: {reason}")]
    CoverageMismatch { reason: String },

    #[error("dictionary induction produced no pairs after dropout")]
    EmptyInduction,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD failed to converge")]
    SvdFailure,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
