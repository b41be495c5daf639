//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the localization library.
#[derive(Debug, Error)]
pub enum Error {
    /// A bearing was requested between two coincident points.
    #[error("bearing is undefined for coincident points ({x}, {y})")]
    CoincidentPoints { x: f64, y: f64 },

    /// A scenario, quantizer or grid parameter violated its invariants.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantizer level index outside `1..=levels`.
    #[error("level index {index} out of range 1..={levels}")]
    LevelOutOfRange { index: usize, levels: usize },

    /// Dynamic-range calibration collapsed to a zero range.
    #[error("degenerate calibration: radio unit {ru} produced a zero dynamic range")]
    DegenerateCalibration { ru: usize },

    /// A template with zero norm cannot be projected onto.
    #[error("weighted template has zero norm")]
    ZeroTemplateNorm,

    /// Too few usable measurements for a fusion step.
    #[error("insufficient measurements: need {required}, got {provided}")]
    InsufficientMeasurements { required: usize, provided: usize },

    /// A matrix inversion failed or was too ill-conditioned to trust.
    #[error("singular or ill-conditioned matrix in {context}")]
    SingularMatrix { context: &'static str },

    /// Configuration file or value errors.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
