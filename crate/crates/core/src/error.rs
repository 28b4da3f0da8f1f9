use thiserror::Error;

/// Errors raised by the store, the sampling primitives and the sketch pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("undefined distribution: {0}")]
    UndefinedDistribution(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sketch size q = {q} exceeds the cap {cap}; set q_override or raise the cap")]
    SketchTooLarge { q: u128, cap: usize },

    #[error("rejection sampling exceeded its budget of {budget} iterations (cancellation too high)")]
    CancellationTooHigh { budget: usize },

    #[error("no singular value above the threshold; the description is empty")]
    NoSignal,

    #[error("vector is orthogonal to the sketch; its projection estimate is zero")]
    OrthogonalToSketch,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("internal invariant violated: {0}")]
    Internal(&'static str),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
