use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the restoration pipeline.
#[derive(Debug, Error)]
pub enum GavnError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing input paths: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingPaths(Vec<PathBuf>),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl GavnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GavnError::Io {
            path: path.into(),
            source,
        }
    }

    /// Validation errors map to exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GavnError::Shape(_)
                | GavnError::InvalidArgument(_)
                | GavnError::Config(_)
                | GavnError::MissingPaths(_)
                | GavnError::Json(_)
                | GavnError::Checkpoint(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GavnError>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::GavnError::Shape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
