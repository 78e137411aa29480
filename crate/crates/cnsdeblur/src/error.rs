use thiserror::Error;

/// Errors raised by the deblurring toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image i/o failed for {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("unsupported image format: {0}")]
    Format(String),

    #[error("kernel text parse error: {0}")]
    Parse(String),

    #[error("null space is ambiguous: smallest singular values {sigma_min:.3e} and {sigma_next:.3e} are within the gap tolerance")]
    Ambiguous {
        sigma_min: f64,
        sigma_next: f64,
        candidates: Box<[Vec<f64>; 2]>,
    },

    #[error("numerical failure in {stage}: {reason}")]
    Numerical { stage: String, reason: String },
}

impl Error {
    pub fn numerical(stage: &str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures that stem from the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::Ambiguous { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
