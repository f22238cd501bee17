//! Online training loop: fresh i.i.d. minibatches every step.

use std::io::Write;

use indhead_linalg::{Matrix, SeededRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Optimizer, Stage, SwitchRule, TrainConfig};
use crate::model::{batch_objective, BatchEval, MixedTarget, ReducedParams, N_PARAMS};
use crate::{Result, TrainError};

/// Sequences per parallel work unit; chunk `c` of step `t` draws from its own
/// substream, so results do not depend on the thread count.
const CHUNK: usize = 125;

/// Batch loss may grow to this multiple of its initial value before the run is aborted.
const DIVERGENCE_FACTOR: f64 = 1e3;

/// Trajectory CSV columns; the first eight match the gradient-flow trajectories.
pub const TRAIN_COLUMNS: [&str; 9] = ["t", "w_V1", "w_V2", "p", "w_KQ", "L_G4", "L_IH2", "L_total", "source"];

/// Parameters before the update of step `step`, with that step's batch losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub params: ReducedParams,
    pub l_g4: f64,
    pub l_ih2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrajectory {
    pub config: TrainConfig,
    pub records: Vec<TrainRecord>,
    /// `(L_G4, L_IH2)` of every step's batch.
    pub batch_losses: Vec<(f64, f64)>,
    pub final_params: ReducedParams,
    /// Step at which a layerwise run left stage I.
    pub switch_step: Option<usize>,
    /// Largest absolute gradient component applied by any update.
    pub max_abs_grad: f64,
}

impl TrainTrajectory {
    /// Trailing means over `window` steps; entry `i` averages steps `i..i+window`.
    pub fn smoothed(&self, window: usize) -> Vec<(f64, f64)> {
        let n = self.batch_losses.len();
        if window == 0 || n < window {
            return Vec::new();
        }
        let w = window as f64;
        let (mut a, mut b) = self.batch_losses[..window].iter().fold((0.0, 0.0), |s, l| (s.0 + l.0, s.1 + l.1));
        let mut out = vec![(a / w, b / w)];
        for i in window..n {
            a += self.batch_losses[i].0 - self.batch_losses[i - window].0;
            b += self.batch_losses[i].1 - self.batch_losses[i - window].1;
            out.push((a / w, b / w));
        }
        out
    }

    /// First window start at which the smoothed `(L_G4, L_IH2)` drops to
    /// `fraction` of its first smoothed value.
    pub fn first_hits(&self, fraction: f64, window: usize) -> (Option<usize>, Option<usize>) {
        let sm = self.smoothed(window);
        let Some(&(g0, i0)) = sm.first() else { return (None, None) };
        (sm.iter().position(|l| l.0 <= fraction * g0), sm.iter().position(|l| l.1 <= fraction * i0))
    }

    /// CSV with [`TRAIN_COLUMNS`]; `t` is the step index.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAIN_COLUMNS)?;
        let source = self.config.optimizer.name();
        for r in &self.records {
            let p = &r.params;
            let nums = [r.step as f64, p.g, p.h, p.p, p.w_kq(), r.l_g4, r.l_ih2, r.l_g4 + r.l_ih2];
            let mut row: Vec<String> = nums.iter().map(|v| v.to_string()).collect();
            row.push(source.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parameters trained in each stage, in gradient order `(p̃, g, p, h, w_Q, w_K)`.
fn mask(stage: Stage) -> [bool; N_PARAMS] {
    match stage {
        Stage::I => [true, false, false, false, false, false],
        Stage::II => [false, true, true, true, true, true],
        Stage::Joint | Stage::Layerwise => [true; N_PARAMS],
    }
}

/// Adam with the usual constants.
struct Adam {
    m: [f64; N_PARAMS],
    v: [f64; N_PARAMS],
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new() -> Self {
        Self { m: [0.0; N_PARAMS], v: [0.0; N_PARAMS], t: 0 }
    }

    fn direction(&mut self, grad: &[f64; N_PARAMS]) -> [f64; N_PARAMS] {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        let mut d = [0.0; N_PARAMS];
        for j in 0..N_PARAMS {
            self.m[j] = Self::B1 * self.m[j] + (1.0 - Self::B1) * grad[j];
            self.v[j] = Self::B2 * self.v[j] + (1.0 - Self::B2) * grad[j] * grad[j];
            d[j] = (self.m[j] / c1) / ((self.v[j] / c2).sqrt() + Self::EPS);
        }
        d
    }
}

/// The minibatch of step `step`, one sequence per row.
pub fn sample_batch(cfg: &TrainConfig, step: usize) -> Matrix {
    let chunks = cfg.batch.div_ceil(CHUNK);
    let parts: Vec<Matrix> = (0..chunks).map(|c| chunk_batch(cfg, step, c)).collect();
    let mut out = Matrix::zeros(cfg.batch, cfg.len);
    for (c, part) in parts.iter().enumerate() {
        out.set_block(c * CHUNK, 0, part);
    }
    out
}

fn chunk_batch(cfg: &TrainConfig, step: usize, c: usize) -> Matrix {
    let chunks = cfg.batch.div_ceil(CHUNK);
    let rows = CHUNK.min(cfg.batch - c * CHUNK);
    let mut rng = SeededRng::substream(cfg.seed, (step * chunks + c) as u64);
    rng.sample(cfg.input, rows, cfg.len)
}

/// Loss and gradient of step `step`'s batch, evaluated chunk-parallel.
fn step_objective(cfg: &TrainConfig, prm: &ReducedParams, tgt: &MixedTarget, step: usize) -> BatchEval {
    let chunks = cfg.batch.div_ceil(CHUNK);
    let parts: Vec<(usize, BatchEval)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let xs = chunk_batch(cfg, step, c);
            (xs.rows(), batch_objective(prm, &xs, tgt))
        })
        .collect();
    let b = cfg.batch as f64;
    let mut total = BatchEval { l_g4: 0.0, l_ih2: 0.0, grad: [0.0; N_PARAMS] };
    for (rows, e) in parts {
        let w = rows as f64 / b;
        total.l_g4 += w * e.l_g4;
        total.l_ih2 += w * e.l_ih2;
        for j in 0..N_PARAMS {
            total.grad[j] += w * e.grad[j];
        }
    }
    total
}

/// Initial parameters: every scalar at `σ_init`, except that a pure stage-II
/// run starts from the frozen first-layer slope.
pub fn initial_params(cfg: &TrainConfig) -> ReducedParams {
    let mut p = ReducedParams::uniform(cfg.sigma_init);
    if cfg.stage == Stage::II {
        p.p1 = cfg.p1_frozen;
    }
    p
}

/// Trains the reduced model for `cfg.steps` steps.
pub fn sgd_train(cfg: &TrainConfig) -> Result<TrainTrajectory> {
    cfg.validate()?;
    let tgt = MixedTarget { alpha_star: cfg.alpha_star, w_star: cfg.w_star };
    let lr = cfg.effective_lr();
    let mut prm = initial_params(cfg);
    let mut adam = Adam::new();
    let mut stage = if cfg.stage == Stage::Layerwise { Stage::I } else { cfg.stage };
    let mut switch_step = None;
    let mut records = Vec::new();
    let mut batch_losses = Vec::with_capacity(cfg.steps);
    let mut initial = None;
    let mut max_abs_grad = 0.0f64;

    for step in 0..cfg.steps {
        if cfg.stage == Stage::Layerwise && stage == Stage::I {
            let done = match cfg.switch {
                SwitchRule::FixedBudget(n) => step >= n,
                SwitchRule::SlopeThreshold(t) => prm.p1 >= t,
            };
            if done {
                stage = Stage::II;
                switch_step = Some(step);
                adam = Adam::new();
            }
        }
        let ev = step_objective(cfg, &prm, &tgt, step);
        let loss = ev.total();
        let init = *initial.get_or_insert(loss);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * init || ev.grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged { step, loss, initial: init });
        }
        batch_losses.push((ev.l_g4, ev.l_ih2));
        if step % cfg.record_every == 0 {
            records.push(TrainRecord { step, params: prm, l_g4: ev.l_g4, l_ih2: ev.l_ih2 });
        }

        let trainable = mask(stage);
        let mut grad = ev.grad;
        for (g, &on) in grad.iter_mut().zip(&trainable) {
            if !on {
                *g = 0.0;
            }
        }
        max_abs_grad = grad.iter().fold(max_abs_grad, |m, g| m.max(g.abs()));
        let dir = match cfg.optimizer {
            Optimizer::Sgd => grad,
            Optimizer::Adam => adam.direction(&grad),
        };
        if lr > 0.0 {
            let mut a = prm.to_array();
            for j in 0..N_PARAMS {
                if trainable[j] {
                    a[j] -= lr * dir[j];
                }
            }
            prm = ReducedParams::from_array(a);
        }
    }
    Ok(TrainTrajectory { config: cfg.clone(), records, batch_losses, final_params: prm, switch_step, max_abs_grad })
}
