use indhead_linalg::{InputDist, Matrix, SeededRng};
use indhead_transformer::{forward_last, TransformerParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{InductionTarget, Result, TargetError};

/// Anything that maps a token sequence to an output vector.
pub trait Predictor: Sync {
    fn predict(&self, seq: &Matrix) -> Result<Vec<f64>>;
}

impl Predictor for TransformerParams {
    fn predict(&self, seq: &Matrix) -> Result<Vec<f64>> {
        forward_last(seq, self).map_err(|e| TargetError::Model(e.to_string()))
    }
}

impl Predictor for InductionTarget {
    fn predict(&self, seq: &Matrix) -> Result<Vec<f64>> {
        self.eval(seq)
    }
}

impl<F> Predictor for F
where
    F: Fn(&Matrix) -> Result<Vec<f64>> + Sync,
{
    fn predict(&self, seq: &Matrix) -> Result<Vec<f64>> {
        self(seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorNorm {
    /// Root mean square of the per-sequence sup-norm error.
    Two,
    /// Largest per-sequence sup-norm error seen. A lower bound on the true sup.
    Inf,
}

/// Result of a sampled error measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub value: f64,
    pub norm: ErrorNorm,
    pub n_samples: usize,
    /// `true` for [`ErrorNorm::Inf`]: the value only bounds the supremum from below.
    pub lower_bound: bool,
}

/// Draws `count` sequences of shape `len × d` in a fixed order from `rng`.
pub fn sample_sequences(rng: &mut SeededRng, count: usize, len: usize, d: usize, dist: InputDist) -> Vec<Matrix> {
    (0..count).map(|_| rng.sample(dist, len, d)).collect()
}

/// Per-sequence `‖H(X) − TF(X)‖∞`, in input order.
pub fn sample_errors(target: &dyn Predictor, model: &dyn Predictor, seqs: &[Matrix]) -> Result<Vec<f64>> {
    seqs.par_iter()
        .map(|x| {
            let a = target.predict(x)?;
            let b = model.predict(x)?;
            if a.len() != b.len() {
                return Err(TargetError::Shape(format!("target gives {} outputs, model {}", a.len(), b.len())));
            }
            Ok(a.iter().zip(&b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())))
        })
        .collect()
}

/// Error of `model` against `target` on a fixed set of sequences.
pub fn approx_error_on(
    target: &dyn Predictor,
    model: &dyn Predictor,
    norm: ErrorNorm,
    seqs: &[Matrix],
) -> Result<ErrorEstimate> {
    let errs = sample_errors(target, model, seqs)?;
    // Sequential reduction keeps the result independent of thread scheduling.
    let value = match norm {
        ErrorNorm::Inf => errs.iter().fold(0.0f64, |m, &e| m.max(e)),
        ErrorNorm::Two => (errs.iter().map(|e| e * e).sum::<f64>() / errs.len().max(1) as f64).sqrt(),
    };
    Ok(ErrorEstimate { value, norm, n_samples: seqs.len(), lower_bound: norm == ErrorNorm::Inf })
}

/// Monte-Carlo estimate of the length-`len` approximation error.
#[allow(clippy::too_many_arguments)]
pub fn approx_error(
    target: &dyn Predictor,
    model: &dyn Predictor,
    len: usize,
    d: usize,
    norm: ErrorNorm,
    n_samples: usize,
    dist: InputDist,
    rng: &mut SeededRng,
) -> Result<ErrorEstimate> {
    let seqs = sample_sequences(rng, n_samples.max(1), len, d, dist);
    approx_error_on(target, model, norm, &seqs)
}
