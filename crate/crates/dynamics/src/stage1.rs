//! Stage I: only the first-layer slope `p̃` is trained.

use serde::{Deserialize, Serialize};

use crate::closed_form::{big_m, g_star, small_m};

/// Second-layer values held fixed during stage I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Frozen {
    /// `w_V1` at initialization.
    pub g0: f64,
    /// Second-layer slope at initialization.
    pub p0: f64,
    pub alpha: f64,
    pub len: usize,
}

/// Softmax weight of key `τ` at query `s` under slope `p̃`, with the mean lag
/// `μ_s` of that softmax.
fn column(pt: f64, s: usize) -> (Vec<f64>, f64) {
    let raw: Vec<f64> = (0..s - 1).map(|k| (-pt * k as f64).exp()).collect();
    let n: f64 = raw.iter().sum();
    let mu = raw.iter().enumerate().map(|(k, e)| k as f64 * e).sum::<f64>() / n;
    (raw.into_iter().map(|e| e / n).collect(), mu)
}

/// `q(p̃) = Σ_{τ=1}^{L−2} (Σ_{s=τ+1}^{L−1} softmax_s(p̃)_τ)²`, where
/// `softmax_s(p̃)_τ = e^{−p̃(s−1−τ)} / Σ_{k=0}^{s−2} e^{−p̃k}`.
pub fn stage1_q(pt: f64, len: usize) -> f64 {
    column_sums(pt, len).0.iter().map(|s| s * s).sum()
}

/// `(S_τ, S′_τ)` for `τ = 1..L−2`.
fn column_sums(pt: f64, len: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(len >= 4, "stage I needs L ≥ 4");
    let mut sums = vec![0.0; len - 2];
    let mut derivs = vec![0.0; len - 2];
    for s in 2..len {
        let (w, mu) = column(pt, s);
        for tau in 1..s {
            let lag = (s - 1 - tau) as f64;
            let wt = w[s - 1 - tau];
            sums[tau - 1] += wt;
            derivs[tau - 1] += wt * (mu - lag);
        }
    }
    (sums, derivs)
}

/// `dq/dp̃`, differentiated through the softmax weights.
pub fn stage1_dq(pt: f64, len: usize) -> f64 {
    let (s, ds) = column_sums(pt, len);
    s.iter().zip(&ds).map(|(a, b)| 2.0 * a * b).sum()
}

/// `dp̃/dt = −g(0)²q′(p̃)/(L−2)² + 2α★g(0)/((1+α★)(L−2)) · m(p(0))/M(p(0))²`.
pub fn stage1_rhs(pt: f64, frozen: &Stage1Frozen) -> f64 {
    let n = (frozen.len - 2) as f64;
    let m = big_m(frozen.p0, frozen.len);
    let drift = 2.0 * g_star(frozen.alpha) * frozen.g0 / n * small_m(frozen.p0, frozen.len) / (m * m);
    -frozen.g0 * frozen.g0 / (n * n) * stage1_dq(pt, frozen.len) + drift
}

/// Stage-I trajectory `(t, p̃)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Trajectory {
    pub t: Vec<f64>,
    pub p_tilde: Vec<f64>,
}

/// RK4 integration of [`stage1_rhs`] from `p̃₀` on `[0, t_end]`.
pub fn run_stage1(pt0: f64, frozen: &Stage1Frozen, dt: f64, t_end: f64) -> Stage1Trajectory {
    assert!(dt > 0.0 && t_end >= 0.0, "need dt > 0 and t_end ≥ 0");
    let steps = (t_end / dt).ceil() as usize;
    let mut t = vec![0.0];
    let mut p = vec![pt0];
    let f = |x: f64| stage1_rhs(x, frozen);
    let mut x = pt0;
    for i in 0..steps {
        let k1 = f(x);
        let k2 = f(x + 0.5 * dt * k1);
        let k3 = f(x + 0.5 * dt * k2);
        let k4 = f(x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t.push((i + 1) as f64 * dt);
        p.push(x);
    }
    Stage1Trajectory { t, p_tilde: p }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_limits() {
        // Uniform weights at p̃ = 0; all mass on the previous token as p̃ → ∞.
        let len = 9;
        let s_tau = |tau: usize| (tau + 1..len).map(|s| 1.0 / (s - 1) as f64).sum::<f64>();
        let q0: f64 = (1..len - 1).map(|t| s_tau(t).powi(2)).sum();
        assert!((stage1_q(0.0, len) - q0).abs() < 1e-12);
        assert!((stage1_q(60.0, len) - (len - 2) as f64).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_central_difference() {
        for len in [6, 20, 40] {
            for pt in [0.01, 0.1, 0.5, 1.0, 3.0] {
                let h = 1e-5;
                let fd = (stage1_q(pt + h, len) - stage1_q(pt - h, len)) / (2.0 * h);
                let an = stage1_dq(pt, len);
                assert!((an - fd).abs() <= 1e-6 * an.abs().max(1e-8), "L={len} p̃={pt}: {an} vs {fd}");
            }
        }
    }
}
