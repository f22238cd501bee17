//! Generalized induction heads with a POD similarity.
//!
//! Coordinate map of the hidden token (`D = nd + 2K`):
//!
//! | coordinates          | content                                   |
//! |----------------------|-------------------------------------------|
//! | `0 .. nd`            | lag blocks, as in the `IHₙ` construction  |
//! | `nd + k`             | `φ̂_k(query patch of z_s)`                 |
//! | `nd + K + k`         | `ψ̂_k(key patch of z_s)`                   |
//!
//! Both feature sets are computed at every position by one wide FFN after the
//! first attention layer; layer 2 pairs them with `√σ_k` selectors so that the
//! logit is `Σ_k σ_k φ̂_k(q) ψ̂_k(k)`.

use indhead_linalg::{softmax, Matrix};
use indhead_targets::{eval_gihn, Predictor};
use indhead_transformer::{hidden_states, FfnParams, TransformerParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ffn_fit::{fit_basis_ffn, BasisFit, DomainBox};
use crate::induction::{block_embedding, block_selector, key_blocks, lag_layer, query_blocks, readout, retrieval_layer};
use crate::kernel::KernelFit;
use crate::pod::{pod_truncate, PodSpec};
use crate::{ConstructError, Result};

/// FFN fits of `φ_1..φ_K` and `ψ_1..ψ_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisNets {
    pub phi: Vec<BasisFit>,
    pub psi: Vec<BasisFit>,
}

impl BasisNets {
    pub fn max_heldout_error(&self) -> f64 {
        self.phi.iter().chain(&self.psi).map(|f| f.heldout_max_error).fold(0.0, f64::max)
    }
}

/// Fits width-`m` networks to the first `k` bases of `pod` on `domain`.
pub fn fit_pod_bases(pod: &PodSpec, k: usize, m: usize, domain: &DomainBox, n_train: usize, seed: u64) -> Result<BasisNets> {
    if k == 0 || k > pod.k_max() {
        return Err(ConstructError::Invalid(format!("K = {k} outside 1..={}", pod.k_max())));
    }
    let fit = |basis: &crate::pod::Basis, stream: u64| fit_basis_ffn(basis.as_ref(), m, domain, n_train, seed.wrapping_add(stream));
    let phi = (0..k).into_par_iter().map(|i| fit(&pod.phi[i], 2 * i as u64)).collect::<Result<Vec<_>>>()?;
    let psi = (0..k).into_par_iter().map(|i| fit(&pod.psi[i], 2 * i as u64 + 1)).collect::<Result<Vec<_>>>()?;
    Ok(BasisNets { phi, psi })
}

/// Appends the rows of `fit` (reading patch coordinates through `selector`) to
/// the FFN, writing into output coordinate `target`.
fn push_basis(inner: &mut Vec<Vec<f64>>, bias: &mut Vec<f64>, out: &mut Vec<(usize, f64)>, fit: &BasisFit, selector: &Matrix, target: usize) {
    let lifted = fit.inner.matmul(selector).expect("patch width matches");
    for r in 0..fit.width() {
        inner.push(lifted.row(r).to_vec());
        bias.push(fit.bias[r]);
        out.push((target, fit.outer[r]));
    }
}

/// Two-layer network for `GIHₙ(g)` with `g` replaced by its rank-`K` POD and
/// the bases by `nets`.
pub fn build_gihn(n: usize, d: usize, pod: &PodSpec, k: usize, nets: &BasisNets, h: usize, fits: &[KernelFit]) -> Result<TransformerParams> {
    if n < 2 || d == 0 {
        return Err(ConstructError::Invalid(format!("need n ≥ 2 and d ≥ 1, got n = {n}, d = {d}")));
    }
    if h < n - 1 {
        return Err(ConstructError::TooFewHeads { n, h });
    }
    if pod.patch_dim != (n - 1) * d {
        return Err(ConstructError::Invalid(format!("POD acts on {} coordinates, patches have {}", pod.patch_dim, (n - 1) * d)));
    }
    if k == 0 || k > pod.k_max() || k > nets.phi.len() || k > nets.psi.len() {
        return Err(ConstructError::Budget(format!(
            "K = {k} exceeds the available rank (POD {}, φ nets {}, ψ nets {})",
            pod.k_max(),
            nets.phi.len(),
            nets.psi.len()
        )));
    }
    let total: usize = fits.iter().map(KernelFit::heads).sum();
    if total != h {
        return Err(ConstructError::Invalid(format!("kernel fits use {total} heads, H = {h}")));
    }
    let base = n * d;
    let dim = base + 2 * k;
    let mut layer1 = lag_layer(dim, d, n, fits)?;
    let sel_q = block_selector(dim, d, &query_blocks(n));
    let sel_k = block_selector(dim, d, &key_blocks(n));
    let (mut inner, mut bias, mut out) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..k {
        push_basis(&mut inner, &mut bias, &mut out, &nets.phi[i], &sel_q, base + i);
        push_basis(&mut inner, &mut bias, &mut out, &nets.psi[i], &sel_k, base + k + i);
    }
    let width = inner.len();
    let mut outer = Matrix::zeros(dim, width);
    for (m, &(t, a)) in out.iter().enumerate() {
        outer[(t, m)] = a;
    }
    layer1.ffn = Some(FfnParams { inner: Matrix::from_rows(&inner), bias, outer });

    let mut w_q = Matrix::zeros(dim, dim);
    let mut w_k = Matrix::zeros(dim, dim);
    for i in 0..k {
        let s = pod.sigma[i].sqrt();
        w_q[(i, base + i)] = s;
        w_k[(i, base + k + i)] = s;
    }
    Ok(TransformerParams {
        w_e: block_embedding(dim, d),
        b_e: vec![0.0; dim],
        layers: vec![layer1, retrieval_layer(dim, d, n, w_q, w_k)],
        readout: Some(readout(d, dim)),
    })
}

/// RMS (over sequences) of the sup-norm differences between the four stages
/// network → exact bases on layer-1 patches → exact patches → untruncated `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    /// Network vs target.
    pub total: f64,
    /// Network vs rank-K POD with exact bases on the layer-1 patches.
    pub basis_term: f64,
    /// Same POD on layer-1 patches vs on exact patches.
    pub kernel_term: f64,
    /// Rank-K POD vs full similarity, both on exact patches.
    pub truncation_term: f64,
}

impl ErrorDecomposition {
    pub fn sum_of_terms(&self) -> f64 {
        self.basis_term + self.kernel_term + self.truncation_term
    }
}

/// Rank-`k` POD head evaluated on the layer-1 patches of `net` with exact bases.
pub fn pod_on_layer1(net: &TransformerParams, pod: &PodSpec, k: usize, n: usize, seq: &Matrix) -> Result<Vec<f64>> {
    let d = seq.cols();
    let len = seq.rows();
    if len <= n {
        return Err(ConstructError::Invalid(format!("sequence length {len} must exceed n = {n}")));
    }
    let z = hidden_states(seq, net, 1)?;
    let blocks = |s: usize, which: &[usize]| -> Vec<f64> {
        which.iter().flat_map(|&b| (0..d).map(move |j| (b, j))).map(|(b, j)| z[((b - 1) * d + j, s - 1)]).collect()
    };
    let q = blocks(len, &query_blocks(n));
    let logits: Vec<f64> = (n..len).map(|s| pod.eval_truncated(k, &q, &blocks(s, &key_blocks(n)))).collect();
    let w = softmax(&logits)?;
    let mut out = vec![0.0; d];
    for (wi, s) in w.iter().zip(n..len) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += wi * z[(j, s - 1)];
        }
    }
    Ok(out)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Measures the three-term decomposition on `seqs`.
pub fn decompose_error(net: &TransformerParams, pod: &PodSpec, k: usize, n: usize, seqs: &[Matrix]) -> Result<ErrorDecomposition> {
    let g_k = pod_truncate(pod, k)?;
    let g = pod.similarity();
    let rows = seqs
        .par_iter()
        .map(|x| -> Result<[f64; 4]> {
            let o1 = net.predict(x)?;
            let o2 = pod_on_layer1(net, pod, k, n, x)?;
            let o3 = eval_gihn(x, n, &g_k)?;
            let o4 = eval_gihn(x, n, &g)?;
            Ok([sup_diff(&o1, &o4), sup_diff(&o1, &o2), sup_diff(&o2, &o3), sup_diff(&o3, &o4)])
        })
        .collect::<Result<Vec<_>>>()?;
    let rms = |c: usize| (rows.iter().map(|r| r[c] * r[c]).sum::<f64>() / rows.len().max(1) as f64).sqrt();
    Ok(ErrorDecomposition { total: rms(0), basis_term: rms(1), kernel_term: rms(2), truncation_term: rms(3) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{fit_indicator_kernel, BetaGrid};
    use indhead_linalg::{InputDist, SeededRng};
    use indhead_transformer::forward_last;
    use std::sync::Arc;

    fn constant_pod() -> PodSpec {
        let one: crate::pod::Basis = Arc::new(|_: &[f64]| 1.0);
        PodSpec { alpha: 1.0, sigma: vec![1.0], phi: vec![one.clone()], psi: vec![one], c_inf: 1.0, c_lip: 0.0, patch_dim: 1 }
    }

    #[test]
    fn constant_similarity_gives_context_average() {
        let pod = constant_pod();
        let dom = DomainBox::cube(1, -1.5, 1.5);
        let nets = fit_pod_bases(&pod, 1, 4, &dom, 100, 3).unwrap();
        assert!(nets.max_heldout_error() < 1e-9);
        let fit = fit_indicator_kernel(1, 2, 64, &BetaGrid::default()).unwrap();
        let net = build_gihn(2, 1, &pod, 1, &nets, 2, &[fit]).unwrap();
        let x = SeededRng::new(8).sample(InputDist::Boolean, 9, 1);
        let y = forward_last(&x, &net).unwrap()[0];
        let avg: f64 = (2..9).map(|s| x[(s - 1, 0)]).sum::<f64>() / 7.0;
        assert!((y - avg).abs() < 1e-9, "{y} vs {avg}");
    }

    #[test]
    fn budget_overflow_rejected() {
        let pod = constant_pod();
        let nets = fit_pod_bases(&pod, 1, 4, &DomainBox::cube(1, 0.0, 1.0), 50, 0).unwrap();
        let fit = fit_indicator_kernel(1, 1, 64, &BetaGrid::default()).unwrap();
        assert!(matches!(build_gihn(2, 1, &pod, 2, &nets, 1, &[fit]), Err(ConstructError::Budget(_))));
    }
}
