//! Linear probing of first-layer representations.

use indhead_linalg::{ridge_lstsq, Matrix, SeededRng};
use indhead_transformer::{hidden_states, HeadParams, LayerParams, TransformerParams};
use serde::{Deserialize, Serialize};

use crate::{Result, TrainError};

/// Ridge added to the probe's normal equations.
pub const PROBE_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Frobenius norm of the probe residual over all positions of all sequences.
    pub loss: f64,
    /// Frobenius norm of the stacked targets, for scale.
    pub target_norm: f64,
    pub ridge: f64,
    /// Number of `(sequence, position)` rows.
    pub rows: usize,
}

impl ProbeReport {
    pub fn relative(&self) -> f64 {
        self.loss / self.target_norm
    }
}

/// Fits one linear map `P` from layer-1 hidden tokens to the patches
/// `X_{s−n+1:s}` at every position `s ≥ n`, jointly over all sequences.
pub fn probe_first_layer(params: &TransformerParams, n: usize, seqs: &[Matrix]) -> Result<ProbeReport> {
    if params.layers.is_empty() {
        return Err(TrainError::Probe("network has no first layer".into()));
    }
    let (d, dim) = (params.token_dim(), params.model_dim());
    if n == 0 || dim < n * d {
        return Err(TrainError::Probe(format!("hidden dimension {dim} is below n·d = {}", n * d)));
    }
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    for seq in seqs {
        let z = hidden_states(seq, params, 1)?;
        for s in n..=seq.rows() {
            feats.push(z.column(s - 1));
            targets.push((s - n..s).flat_map(|t| seq.row(t).to_vec()).collect::<Vec<f64>>());
        }
    }
    if feats.is_empty() {
        return Err(TrainError::Probe(format!("no sequence has length ≥ n = {n}")));
    }
    let (f, y) = (Matrix::from_rows(&feats), Matrix::from_rows(&targets));
    let (_, report) = ridge_lstsq(&f, &y, PROBE_RIDGE)?;
    Ok(ProbeReport { loss: report.residual, target_norm: y.norm_frobenius(), ridge: PROBE_RIDGE, rows: f.rows() })
}

/// Copy of `template` whose first layer is replaced by random heads of the same
/// count and shape: Gaussian `W_Q, W_K, W_V` with variance `1/D`, slopes uniform
/// on `[0, 1]`, `W_O = I`, residual kept and no FFN.
pub fn random_first_layer(template: &TransformerParams, seed: u64) -> TransformerParams {
    let dim = template.model_dim();
    let heads = template.layers.first().map_or(1, |l| l.heads.len().max(1));
    let mut rng = SeededRng::new(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let gauss = |rng: &mut SeededRng| Matrix::from_fn(dim, dim, |_, _| scale * rng.gaussian());
    let heads = (0..heads)
        .map(|_| HeadParams {
            w_q: gauss(&mut rng),
            w_k: gauss(&mut rng),
            w_v: gauss(&mut rng),
            rpe_slope: Some(rng.uniform()),
            min_key: None,
        })
        .collect();
    let mut out = template.clone();
    let layer = LayerParams { heads, w_o: Matrix::identity(dim), use_residual: true, ffn: None };
    match out.layers.first_mut() {
        Some(l) => *l = layer,
        None => out.layers.push(layer),
    }
    out
}
