use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point maps to infinity (homogeneous scale {0:e})")]
    PointAtInfinity(f64),
    #[error("degenerate result: {0}")]
    DegenerateResult(String),
    #[error("too few correspondences: need at least 4, got {0}")]
    TooFewCorrespondences(usize),
    #[error("degenerate correspondence configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("insufficient weighted support: {support} pairs above the weight floor, need 4")]
    InsufficientSupport { support: usize },
    #[error("no valid RANSAC hypothesis after {attempts} samples")]
    NoValidHypothesis { attempts: usize },
    #[error("image size mismatch: {expected:?} vs {actual:?}")]
    ImageSizeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("frame size {actual:?} does not match template size {expected:?}")]
    FrameSizeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("template mask has {0} pixels, need at least 4 non-collinear")]
    EmptyMask(usize),
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("missing flow for frame {frame}: {path}")]
    MissingFlow { frame: usize, path: PathBuf },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Failures a robust caller (the tracker) may absorb by falling back.
    pub fn is_estimation_failure(&self) -> bool {
        matches!(
            self,
            Error::TooFewCorrespondences(_)
                | Error::DegenerateConfiguration(_)
                | Error::InsufficientSupport { .. }
                | Error::NoValidHypothesis { .. }
                | Error::DegenerateResult(_)
                | Error::PointAtInfinity(_)
        )
    }
}
