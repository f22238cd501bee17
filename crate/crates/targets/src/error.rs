use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("sequence of length {len} is too short; need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("pattern length n = {0} outside 2..=100")]
    PatternLength(usize),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("model evaluation failed: {0}")]
    Model(String),
}
