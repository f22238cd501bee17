//! Training configuration.

use indhead_linalg::InputDist;
use serde::{Deserialize, Serialize};

use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    /// Step size used when the configuration leaves it unset: 0.1 for SGD and
    /// 5e-4 for Adam.
    pub fn default_lr(self) -> f64 {
        match self {
            Self::Sgd => 0.1,
            Self::Adam => 5e-4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(format!("unknown optimizer `{other}` (sgd|adam)")),
        }
    }
}

/// Which parameters move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Only the first-layer slope `p̃`.
    #[serde(rename = "I")]
    I,
    /// The five second-layer scalars, with `p̃` frozen at `p1_frozen`.
    #[serde(rename = "II")]
    II,
    /// All six parameters at once.
    Joint,
    /// Stage I until the switch rule fires, then stage II from the learned `p̃`.
    Layerwise,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "I" | "i" | "1" => Ok(Self::I),
            "II" | "ii" | "2" => Ok(Self::II),
            "joint" => Ok(Self::Joint),
            "layerwise" => Ok(Self::Layerwise),
            other => Err(format!("unknown stage `{other}` (I|II|joint|layerwise)")),
        }
    }
}

/// When a layerwise run leaves stage I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchRule {
    /// After a fixed number of stage-I steps.
    FixedBudget(usize),
    /// Once `p̃` reaches the given value (or the step budget runs out).
    SlopeThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    /// `None` selects [`Optimizer::default_lr`]. Zero is allowed and makes
    /// every update a no-op.
    pub lr: Option<f64>,
    pub batch: usize,
    pub steps: usize,
    pub stage: Stage,
    pub input: InputDist,
    pub seed: u64,
    pub len: usize,
    pub alpha_star: f64,
    pub w_star: f64,
    pub sigma_init: f64,
    /// First-layer slope held fixed by a pure stage-II run.
    pub p1_frozen: f64,
    pub switch: SwitchRule,
    /// Keep parameters and losses of every `record_every`-th step.
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            lr: None,
            batch: 1000,
            steps: 40_000,
            stage: Stage::II,
            input: InputDist::Gaussian,
            seed: 42,
            len: 40,
            alpha_star: 1.0,
            w_star: 0.49,
            sigma_init: 0.01,
            p1_frozen: 10.0,
            switch: SwitchRule::FixedBudget(100_000),
            record_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn effective_lr(&self) -> f64 {
        self.lr.unwrap_or_else(|| self.optimizer.default_lr())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        let lr = self.effective_lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return bad(format!("learning rate {lr} must be finite and nonnegative"));
        }
        if self.batch == 0 || self.steps == 0 || self.record_every == 0 {
            return bad("batch, steps and record_every must be positive".into());
        }
        if self.len < 5 {
            return bad(format!("sequence length {} must be at least 5", self.len));
        }
        if !(self.alpha_star > 0.0 && self.alpha_star.is_finite()) {
            return bad(format!("α★ = {} must be positive", self.alpha_star));
        }
        if !(self.w_star > 0.0 && self.w_star < std::f64::consts::FRAC_1_SQRT_2) {
            return bad(format!("w★ = {} must lie in (0, 1/√2)", self.w_star));
        }
        if !self.sigma_init.is_finite() || !self.p1_frozen.is_finite() {
            return bad("σ_init and p1_frozen must be finite".into());
        }
        if let SwitchRule::SlopeThreshold(t) = self.switch {
            if !t.is_finite() {
                return bad(format!("switch threshold {t} must be finite"));
            }
        }
        Ok(())
    }
}
