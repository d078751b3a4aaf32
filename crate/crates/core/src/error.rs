use thiserror::Error;

pub type Result<T> = std::result::Result<T, SllError>;

#[derive(Debug, Error)]
pub enum SllError {
    #[error("label id {id} out of range (label count {count})")]
    InvalidLabelId { id: usize, count: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} did not converge: {detail}")]
    NotConverged { what: String, detail: String },

    #[error("label {0} is already registered")]
    DuplicateLabel(usize),

    #[error("every evaluated label has only positives or only negatives")]
    AllLabelsDegenerate,

    #[error("feature matrix is rank deficient (smallest singular value {0:e})")]
    RankDeficientFeatures(f64),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> SllError {
    SllError::Shape(msg.into())
}
