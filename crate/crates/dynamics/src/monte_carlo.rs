//! Monte-Carlo estimates of the closed-form expectations from their sampling
//! definitions, used as independent oracles.

use indhead_linalg::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{g_star, h_star};

/// Samples per shard; shard `k` draws from substream `k` of the seed.
const SHARD: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    /// `|mean − exact|` in units of the standard error.
    pub fn z_score(&self, exact: f64) -> f64 {
        (self.mean - exact).abs() / self.std_error
    }
}

/// Mean and standard error of `f` over `n` draws, sharded deterministically.
fn estimate(n: usize, seed: u64, f: impl Fn(&mut SeededRng) -> f64 + Sync) -> McEstimate {
    assert!(n >= 2, "need at least two samples");
    let shards = n.div_ceil(SHARD);
    let sums: Vec<(f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = SeededRng::substream(seed, k as u64);
            let count = SHARD.min(n - k * SHARD);
            (0..count).fold((0.0, 0.0), |(s, s2), _| {
                let v = f(&mut rng);
                (s + v, s2 + v * v)
            })
        })
        .collect();
    let (s, s2) = sums.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    McEstimate { mean, std_error: (var / nf).sqrt(), n }
}

fn gaussian_seq(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gaussian()).collect()
}

/// `½E[(g Σ_{s=2}^{L−1} x_{s−1} π_s − g★ x_{L−2})²]` with `π = softmax(−p(L−1−s))`
/// and a first layer that copies the previous token exactly.
pub fn mc_loss_g4(p: f64, g: f64, alpha: f64, len: usize, n: usize, seed: u64) -> McEstimate {
    let logits: Vec<f64> = (2..len).map(|s| -p * (len - 1 - s) as f64).collect();
    let pi = indhead_linalg::softmax(&logits).expect("finite logits");
    let gs = g_star(alpha);
    estimate(n, seed, |rng| {
        let x = gaussian_seq(rng, len);
        let out: f64 = g * (2..len).map(|s| x[s - 2] * pi[s - 2]).sum::<f64>();
        0.5 * (out - gs * x[len - 3]).powi(2)
    })
}

/// `½E[(h Σ_s x_s e^{x_L w² x_{s−1}} − h★ Σ_s x_s e^{x_L w★² x_{s−1}})²] / (L−2)²`
/// over `s = 2..L−1`: the exponentially simplified induction head.
pub fn mc_loss_ih2(w: f64, h: f64, alpha: f64, w_star: f64, len: usize, n: usize, seed: u64) -> McEstimate {
    let (a, b) = (w * w, w_star * w_star);
    let hs = h_star(alpha);
    let norm = (len - 2) as f64;
    estimate(n, seed, |rng| {
        let x = gaussian_seq(rng, len);
        let q = x[len - 1];
        let diff: f64 = (2..len)
            .map(|s| {
                let (xs, prev) = (x[s - 1], x[s - 2]);
                xs * (h * (a * q * prev).exp() - hs * (b * q * prev).exp())
            })
            .sum();
        0.5 * (diff / norm).powi(2)
    })
}

/// `E[e^{aXY} Z²]` for independent standard normals; equals `(1 − a²)^{−1/2}`.
pub fn mc_gaussian_identity(a: f64, n: usize, seed: u64) -> McEstimate {
    estimate(n, seed, |rng| {
        let (x, y, z) = (rng.gaussian(), rng.gaussian(), rng.gaussian());
        (a * x * y).exp() * z * z
    })
}
