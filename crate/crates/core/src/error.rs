use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ChoiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ChoiceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A transaction violates a dataset invariant. `index` is 0-based among
    /// transactions.
    #[error("invalid transaction {index}: {reason}")]
    InvalidTransaction { index: usize, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid assortment: {0}")]
    InvalidAssortment(String),

    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite objective at epoch {epoch}")]
    NonFiniteObjective { epoch: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("missing benchmark cell: model {model} on category {category}")]
    MissingCell { model: String, category: String },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl ChoiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ChoiceError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        what: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        ChoiceError::ShapeMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Short stable tag for machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            ChoiceError::Io { .. } => "io",
            ChoiceError::Parse { .. } => "parse",
            ChoiceError::InvalidTransaction { .. } => "invalid_transaction",
            ChoiceError::InvalidDataset(_) => "invalid_dataset",
            ChoiceError::InvalidAssortment(_) => "invalid_assortment",
            ChoiceError::ShapeMismatch { .. } => "shape_mismatch",
            ChoiceError::InvalidParams(_) => "invalid_params",
            ChoiceError::InvalidConfig(_) => "invalid_config",
            ChoiceError::NonFiniteObjective { .. } => "non_finite_objective",
            ChoiceError::NonFinite(_) => "non_finite",
            ChoiceError::MissingCell { .. } => "missing_cell",
            ChoiceError::Serialization(_) => "serialization",
        }
    }
}
