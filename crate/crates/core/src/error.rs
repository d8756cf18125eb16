use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("element {value} at index {index} is not bipolar")]
    NotBipolar { index: usize, value: i8 },

    #[error("cannot bundle an empty list of hypervectors")]
    EmptyBundle,

    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("pixel {index} has value {value}, outside 0..{levels}")]
    PixelOutOfRange { index: usize, value: u8, levels: usize },

    #[error("label {label} is outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("model has no trained classes")]
    NoTrainedClasses,

    #[error("class {0} has not been trained")]
    UntrainedClass(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed input files (dataset, model, report).
    pub fn is_parse(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Length { .. } | Error::Json(_) | Error::Csv(_)
        )
    }

    /// True for errors caused by a bad configuration value rather than data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}
