use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field must have at least one pixel (got {width}x{height})")]
    EmptyField { width: usize, height: usize },

    #[error("sample buffer has {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },

    #[error("negative sample {value} at index {index}")]
    NegativeSample { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
