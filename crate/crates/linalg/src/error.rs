use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Every entry of the column was masked, i.e. the attention context is empty.
    #[error("column {col} is fully masked")]
    EmptyColumn { col: usize },
    #[error("system is singular or numerically rank deficient")]
    Singular,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}
