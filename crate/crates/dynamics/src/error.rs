use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    /// `2w² < 1` or `w² + w★² < 1` failed: the state left the region where the
    /// closed-form induction-head loss is defined.
    #[error("state left the loss domain (w = {w}, w★ = {w_star})")]
    Domain { w: f64, w_star: f64 },
    #[error("step size could not be reduced enough to stay in the loss domain at t = {t}")]
    StepFailure { t: f64 },
    #[error("invalid parameters: {0}")]
    Invalid(String),
}
