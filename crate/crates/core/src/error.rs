use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TdaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TdaError {
    #[error("invalid feature{}: {reason}", at_record(*record))]
    InvalidFeature {
        record: Option<usize>,
        reason: String,
    },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("class id {class} out of range for {num_classes} classes")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("invalid cache entry: {0}")]
    InvalidEntry(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("unsupported dataset format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt dataset{}: {reason}", at_record(*record))]
    CorruptDataset {
        record: Option<usize>,
        reason: String,
    },

    #[error("grid has {size} combinations, limit is {limit}")]
    GridTooLarge { size: usize, limit: usize },

    #[error("no cache dump available at {}", .0.display())]
    NoDumpAvailable(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn at_record(record: Option<usize>) -> String {
    match record {
        Some(i) => format!(" at record {i}"),
        None => String::new(),
    }
}

impl TdaError {
    /// Stable error class name, printed by the CLI on failure.
    pub fn class_name(&self) -> &'static str {
        match self {
            TdaError::InvalidFeature { .. } => "InvalidFeature",
            TdaError::InvalidDimension(_) => "InvalidDimension",
            TdaError::DimensionMismatch { .. } => "DimensionMismatch",
            TdaError::InvalidClass { .. } => "InvalidClass",
            TdaError::InvalidEntry(_) => "InvalidEntry",
            TdaError::InvalidConfig { .. } => "InvalidConfig",
            TdaError::UnsupportedFormat(_) => "UnsupportedFormat",
            TdaError::CorruptDataset { .. } => "CorruptDataset",
            TdaError::GridTooLarge { .. } => "GridTooLarge",
            TdaError::NoDumpAvailable(_) => "NoDumpAvailable",
            TdaError::Io { .. } => "Io",
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        TdaError::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        TdaError::Io {
            context: context.into(),
            source,
        }
    }
}
