use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulation, training and analysis pipeline.
#[derive(Debug, Error)]
pub enum LomaeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("noise injection failed: {clamped} of {total} entries hit the denominator floor (limit 1%)")]
    DoseTooLow { clamped: usize, total: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training protocol violation: {0}")]
    Protocol(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image encoding error: {0}")]
    Image(#[from] image::ImageError),
}

impl LomaeError {
    /// Short category tag used for CLI error lines and FFI error codes.
    pub fn category(&self) -> &'static str {
        match self {
            LomaeError::InvalidArgument(_) => "argument",
            LomaeError::Shape(_) => "shape",
            LomaeError::Config(_) => "config",
            LomaeError::DoseTooLow { .. } => "dose",
            LomaeError::Degenerate(_) => "degenerate",
            LomaeError::Protocol(_) => "protocol",
            LomaeError::Checkpoint(_) => "checkpoint",
            LomaeError::Format { .. } | LomaeError::Csv(_) | LomaeError::Json(_) => "format",
            LomaeError::Io { .. } | LomaeError::Image(_) => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LomaeError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = LomaeError> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::LomaeError::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
