use indhead_linalg::LinalgError;
use indhead_targets::TargetError;
use indhead_transformer::TransformerError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstructError {
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Fewer heads than lags. The only available guarantee is the trivial
    /// error bound 1, so no network is emitted.
    #[error("H = {h} < n − 1 = {}: fewer heads than lags; only the trivial error bound 1 applies", n - 1)]
    TooFewHeads { n: usize, h: usize },
    #[error("coordinate budget exceeded: {0}")]
    Budget(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Transformer(#[from] TransformerError),
    #[error(transparent)]
    Target(#[from] TargetError),
}
