use indhead_linalg::LinalgError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformerError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
