//! Crate-wide error type.
//!
//! Every fallible operation in the pipeline returns [`PipelineError`]. The
//! CLI maps each variant onto a stable machine-readable code (see
//! [`PipelineError::code`]) which is emitted as JSON on stderr.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("malformed row {row} in {path}: {detail}")]
    MalformedRow {
        path: String,
        row: usize,
        detail: String,
    },

    #[error("unknown label {label:?} at row {row} in {path}")]
    UnknownLabel {
        path: String,
        row: usize,
        label: String,
    },

    #[error("no data rows in {path}")]
    EmptyFile { path: String },

    #[error("label scheme mismatch: {left} vs {right}")]
    SchemeMismatch { left: String, right: String },

    #[error("class {class:?} has only {count} records, need at least {min}")]
    ClassTooSmall {
        class: String,
        count: usize,
        min: usize,
    },

    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: String,
        expected: String,
        actual: String,
    },

    #[error("tensor {name:?} missing or truncated in archive {path}")]
    MissingTensor { name: String, path: String },

    #[error("token id {id} out of range (vocab size {vocab_size})")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss {value} at epoch {epoch} batch {batch}")]
    NonFiniteLoss {
        value: f64,
        epoch: usize,
        batch: usize,
    },

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("length mismatch: {left} predictions vs {right} golds")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl PipelineError {
    /// Stable machine-readable code for the CLI's JSON error output.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::MalformedRow { .. } => "malformed_row",
            PipelineError::UnknownLabel { .. } => "unknown_label",
            PipelineError::EmptyFile { .. } => "empty_file",
            PipelineError::SchemeMismatch { .. } => "scheme_mismatch",
            PipelineError::ClassTooSmall { .. } => "class_too_small",
            PipelineError::ShapeMismatch { .. } => "shape_mismatch",
            PipelineError::MissingTensor { .. } => "missing_tensor",
            PipelineError::IdOutOfRange { .. } => "id_out_of_range",
            PipelineError::InvalidConfig(_) => "invalid_config",
            PipelineError::NonFiniteLoss { .. } => "non_finite_loss",
            PipelineError::IoFailure { .. } => "io_failure",
            PipelineError::VersionMismatch { .. } => "version_mismatch",
            PipelineError::LengthMismatch { .. } => "length_mismatch",
            PipelineError::EmptyInput(_) => "empty_input",
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        PipelineError::IoFailure {
            path: path.into(),
            source,
        }
    }
}
