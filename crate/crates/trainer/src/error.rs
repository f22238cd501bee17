use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    /// The batch loss left the guard band `[0, 10³ · initial]` or became non-finite.
    #[error("training diverged at step {step}: batch loss {loss} (initial {initial})")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("probe setup: {0}")]
    Probe(String),
    #[error(transparent)]
    Linalg(#[from] indhead_linalg::LinalgError),
    #[error(transparent)]
    Transformer(#[from] indhead_transformer::TransformerError),
}
