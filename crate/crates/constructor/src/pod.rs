//! Separable (POD) similarities `g(u, v) = Σ_k σ_k φ_k(u) ψ_k(v)`.

use std::fmt;
use std::sync::Arc;

use indhead_targets::SimilarityFn;

use crate::{ConstructError, Result};

/// A basis function on patch space.
pub type Basis = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct PodSpec {
    /// Decay exponent: `σ_k ≤ C k^{−(1+α)}`.
    pub alpha: f64,
    pub sigma: Vec<f64>,
    pub phi: Vec<Basis>,
    pub psi: Vec<Basis>,
    /// Uniform bound on the basis functions.
    pub c_inf: f64,
    /// Uniform Lipschitz bound (sup-norm to absolute value) on the bases.
    pub c_lip: f64,
    pub patch_dim: usize,
}

impl fmt::Debug for PodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PodSpec")
            .field("alpha", &self.alpha)
            .field("sigma", &self.sigma)
            .field("patch_dim", &self.patch_dim)
            .field("c_inf", &self.c_inf)
            .field("c_lip", &self.c_lip)
            .finish_non_exhaustive()
    }
}

/// Nonzero multi-indices of length `dim`, by total degree, then lexicographic.
pub fn multi_indices(dim: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    let mut degree = 1;
    while out.len() < count {
        let mut cur = vec![0; dim];
        push_degree(&mut cur, 0, degree, &mut out, count);
        degree += 1;
    }
    out
}

fn push_degree(cur: &mut Vec<usize>, pos: usize, left: usize, out: &mut Vec<Vec<usize>>, count: usize) {
    if out.len() >= count {
        return;
    }
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for v in (0..=left).rev() {
        cur[pos] = v;
        push_degree(cur, pos + 1, left - v, out, count);
    }
    cur[pos] = 0;
}

/// `Π_j c_j cos(m_j π u_j)` with `c_j = √2` for `m_j > 0` and `1` otherwise;
/// orthonormal on `[0, 1]^dim`.
pub fn cosine_basis(m: Vec<usize>) -> Basis {
    Arc::new(move |u: &[f64]| {
        m.iter()
            .zip(u)
            .map(|(&k, &x)| if k == 0 { 1.0 } else { std::f64::consts::SQRT_2 * (k as f64 * std::f64::consts::PI * x).cos() })
            .product()
    })
}

impl PodSpec {
    /// Synthetic family `σ_k = k^{−(1+α)}`, `φ_k = ψ_k` tensorized cosines.
    pub fn synthetic(alpha: f64, k_max: usize, patch_dim: usize) -> Result<Self> {
        if !(alpha > 0.0) || k_max == 0 || patch_dim == 0 {
            return Err(ConstructError::Invalid("need α > 0, K_max ≥ 1, patch_dim ≥ 1".into()));
        }
        let idx = multi_indices(patch_dim, k_max);
        let sigma = (1..=k_max).map(|k| (k as f64).powf(-(1.0 + alpha))).collect();
        let nz_max = idx.iter().map(|m| m.iter().filter(|&&k| k > 0).count()).max().unwrap_or(1);
        let c_inf = std::f64::consts::SQRT_2.powi(nz_max as i32);
        let c_lip = idx
            .iter()
            .map(|m| {
                let nz = m.iter().filter(|&&k| k > 0).count() as i32;
                std::f64::consts::SQRT_2.powi(nz) * std::f64::consts::PI * m.iter().sum::<usize>() as f64
            })
            .fold(0.0, f64::max);
        let phi: Vec<Basis> = idx.into_iter().map(cosine_basis).collect();
        Ok(Self { alpha, sigma, psi: phi.clone(), phi, c_inf, c_lip, patch_dim })
    }

    pub fn k_max(&self) -> usize {
        self.sigma.len()
    }

    /// `Σ_{k ≤ K} σ_k φ_k(u) ψ_k(v)`.
    pub fn eval_truncated(&self, k: usize, u: &[f64], v: &[f64]) -> f64 {
        (0..k).map(|i| self.sigma[i] * (self.phi[i])(u) * (self.psi[i])(v)).sum()
    }

    /// `Σ_{k > K} σ_k`.
    pub fn tail(&self, k: usize) -> f64 {
        self.sigma[k.min(self.k_max())..].iter().sum()
    }

    /// The untruncated similarity.
    pub fn similarity(&self) -> SimilarityFn {
        pod_truncate(self, self.k_max()).expect("K_max is in range")
    }
}

/// `g_K(u, v) = Σ_{k=1}^{K} σ_k φ_k(u) ψ_k(v)`.
pub fn pod_truncate(pod: &PodSpec, k: usize) -> Result<SimilarityFn> {
    if k == 0 || k > pod.k_max() {
        return Err(ConstructError::Invalid(format!("K = {k} outside 1..={}", pod.k_max())));
    }
    let pod = pod.clone();
    Ok(SimilarityFn::new(format!("pod rank {k}"), move |u, v| pod.eval_truncated(k, u, v)))
}

/// Minimizer over `K ∈ 1..=k_max` of `c₁ √(K ln M / M) + c₂ L / K^α`.
pub fn choose_k_with(m: usize, len: usize, alpha: f64, k_max: usize, c1: f64, c2: f64) -> usize {
    let mf = m.max(2) as f64;
    let cost = |k: usize| {
        let kf = k as f64;
        c1 * (kf * mf.ln() / mf).sqrt() + c2 * len as f64 / kf.powf(alpha)
    };
    (1..=k_max.max(1)).min_by(|&a, &b| cost(a).total_cmp(&cost(b))).unwrap_or(1)
}

/// [`choose_k_with`] with unit constants.
pub fn choose_k(m: usize, len: usize, alpha: f64, k_max: usize) -> usize {
    choose_k_with(m, len, alpha, k_max, 1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_order() {
        assert_eq!(multi_indices(1, 3), vec![vec![1], vec![2], vec![3]]);
        assert_eq!(multi_indices(2, 5), vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn synthetic_invariants() {
        let pod = PodSpec::synthetic(1.0, 20, 2).unwrap();
        assert!(pod.sigma.windows(2).all(|w| w[1] <= w[0]));
        for (k, s) in pod.sigma.iter().enumerate() {
            assert!(*s <= ((k + 1) as f64).powi(-2) + 1e-15);
        }
        for i in 0..=10 {
            for j in 0..=10 {
                let u = [i as f64 / 10.0, j as f64 / 10.0];
                for b in &pod.phi {
                    assert!(b(&u).abs() <= pod.c_inf + 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_rank_truncation_is_exact() {
        let pod = PodSpec::synthetic(1.0, 8, 1).unwrap();
        let g = pod.similarity();
        let g8 = pod_truncate(&pod, 8).unwrap();
        for i in 0..20 {
            let u = [i as f64 / 19.0];
            let v = [1.0 - i as f64 / 23.0];
            assert_eq!(g.eval(&u, &v), g8.eval(&u, &v));
        }
        assert!(pod_truncate(&pod, 0).is_err());
        assert!(pod_truncate(&pod, 9).is_err());
    }

    #[test]
    fn choose_k_grows_with_m() {
        let mut last = 0;
        for m in [4, 16, 64, 256, 1024, 4096, 1 << 14, 1 << 16] {
            let k = choose_k(m, 16, 1.0, 200);
            assert!(k >= last);
            last = k;
        }
        assert!(last > 1);
    }
}
