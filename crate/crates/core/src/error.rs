use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two extents that must agree do not.
    #[error("dimension mismatch on {axis}: {detail}")]
    Dimension { axis: String, detail: String },

    /// Spatial arithmetic (stride, window, crop box) does not fit.
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("batch-size error: {0}")]
    BatchSize(String),

    #[error("label {label} out of range 0..{num_classes}")]
    Label { label: usize, num_classes: usize },

    #[error("sample-size error: {0}")]
    SampleSize(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: invalid record: {message}")]
    Validation {
        path: String,
        line: usize,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("class coverage error: class {class} has no records")]
    Coverage { class: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint error at byte {offset}: {message}")]
    Checkpoint { offset: u64, message: String },

    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: String, found: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("missing predictions for {} item(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),

    #[error("image error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Geometry(_) => "geometry",
            Error::Rank(_) => "rank",
            Error::BatchSize(_) => "batch_size",
            Error::Label { .. } => "label",
            Error::SampleSize(_) => "sample_size",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Coverage { .. } => "coverage",
            Error::Divergence(_) => "divergence",
            Error::Checkpoint { .. } => "checkpoint",
            Error::TaskMismatch { .. } => "task_mismatch",
            Error::Alignment(_) => "alignment",
            Error::MissingPredictions(_) => "missing_predictions",
            Error::Image { .. } => "image",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn dim(axis: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            axis: axis.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
