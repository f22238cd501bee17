//! The reparameterized two-layer model with full softmax attention, its mixed
//! target, and exact reverse-mode gradients.
//!
//! With tokens `x_1, …, x_L` (1-based):
//!
//! * layer 1: `y_s = Σ_{τ<s} x_τ softmax_τ(−p̃ (s−1−τ))`, an approximate copy of `x_{s−1}`;
//! * 4-gram head: `o₁ = g Σ_{s=2}^{L−1} y_s π_s` with `π = softmax(−p (L−1−s))`;
//! * induction head: `o₂ = h Σ_{s=2}^{L−1} x_s ρ_s` with `ρ = softmax(x_L w_Q w_K y_s)`;
//! * targets: `t₁ = g★ x_{L−2}` and `t₂ = h★ Σ_s x_s softmax(x_L w★² x_{s−1})`.
//!
//! The batch loss is `½ mean (o₁ − t₁)² + ½ mean (o₂ − t₂)²`.

use indhead_linalg::Matrix;
use serde::{Deserialize, Serialize};

/// Number of trainable scalars.
pub const N_PARAMS: usize = 6;

/// Parameter names in gradient order.
pub const PARAM_NAMES: [&str; N_PARAMS] = ["p1", "w_V1", "p", "w_V2", "w_Q", "w_K"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    /// First-layer slope `p̃`.
    pub p1: f64,
    /// 4-gram value weight `g`.
    pub g: f64,
    /// Second-layer slope `p`.
    pub p: f64,
    /// Induction value weight `h`.
    pub h: f64,
    pub w_q: f64,
    pub w_k: f64,
}

impl ReducedParams {
    /// Every parameter at `σ`.
    pub fn uniform(sigma: f64) -> Self {
        Self { p1: sigma, g: sigma, p: sigma, h: sigma, w_q: sigma, w_k: sigma }
    }

    pub fn to_array(self) -> [f64; N_PARAMS] {
        [self.p1, self.g, self.p, self.h, self.w_q, self.w_k]
    }

    pub fn from_array(a: [f64; N_PARAMS]) -> Self {
        Self { p1: a[0], g: a[1], p: a[2], h: a[3], w_q: a[4], w_k: a[5] }
    }

    /// `sign(w_Q w_K) √|w_Q w_K|`, the single key–query scalar of the flow.
    pub fn w_kq(&self) -> f64 {
        let v = self.w_q * self.w_k;
        v.signum() * v.abs().sqrt()
    }
}

/// Target mixture `(α★, w★)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedTarget {
    pub alpha_star: f64,
    pub w_star: f64,
}

impl MixedTarget {
    pub fn g_star(&self) -> f64 {
        self.alpha_star / (1.0 + self.alpha_star)
    }

    pub fn h_star(&self) -> f64 {
        1.0 / (1.0 + self.alpha_star)
    }

    /// `(t₁, t₂)` for one sequence.
    pub fn eval(&self, x: &[f64]) -> (f64, f64) {
        self.eval_with(x, &mut Vec::new())
    }

    fn eval_with(&self, x: &[f64], buf: &mut Vec<f64>) -> (f64, f64) {
        let len = x.len();
        let a = x[len - 1] * self.w_star * self.w_star;
        buf.clear();
        buf.extend((2..len).map(|s| a * x[s - 2]));
        let t2 = softmax_dot(buf, |k| x[k + 1]);
        (self.g_star() * x[len - 3], self.h_star() * t2)
    }
}

/// `Σ_k softmax(logits)_k · v(k)`.
fn softmax_dot(logits: &[f64], v: impl Fn(usize) -> f64) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, &l) in logits.iter().enumerate() {
        let e = (l - m).exp();
        num += e * v(k);
        den += e;
    }
    num / den
}

/// Loss components and gradient on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchEval {
    pub l_g4: f64,
    pub l_ih2: f64,
    /// `∂(l_g4 + l_ih2)/∂θ` in [`PARAM_NAMES`] order.
    pub grad: [f64; N_PARAMS],
}

impl BatchEval {
    pub fn total(&self) -> f64 {
        self.l_g4 + self.l_ih2
    }
}

/// Quantities shared by every sequence at the current parameters.
struct Shared {
    len: usize,
    /// `Z_s = Σ_{k=0}^{s−2} e^{−p̃k}` and `Σ k e^{−p̃k}`, indexed by 1-based `s`.
    z: Vec<f64>,
    zk: Vec<f64>,
    decay: f64,
    /// `π_s` for `s = 2..L−1`, stored at `s − 2`.
    pi: Vec<f64>,
    /// Mean lag `Σ π_s (L−1−s)`.
    nu: f64,
}

impl Shared {
    fn new(prm: &ReducedParams, len: usize) -> Self {
        let decay = (-prm.p1).exp();
        let (mut z, mut zk) = (vec![0.0; len], vec![0.0; len]);
        z[2] = 1.0;
        for s in 2..len - 1 {
            zk[s + 1] = decay * (zk[s] + z[s]);
            z[s + 1] = 1.0 + decay * z[s];
        }
        let logits: Vec<f64> = (2..len).map(|s| -prm.p * (len - 1 - s) as f64).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut pi: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let sum: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= sum);
        let nu = pi.iter().enumerate().map(|(k, w)| w * (len - 3 - k) as f64).sum();
        Self { len, z, zk, decay, pi, nu }
    }
}

/// Per-sequence work buffers.
#[derive(Default)]
struct Scratch {
    y: Vec<f64>,
    dy: Vec<f64>,
    rho: Vec<f64>,
    target: Vec<f64>,
}

/// Per-sequence loss terms and gradient contributions (not yet averaged).
fn sequence_terms(x: &[f64], prm: &ReducedParams, tgt: &MixedTarget, sh: &Shared, buf: &mut Scratch, acc: &mut [f64; N_PARAMS + 2]) {
    let len = sh.len;
    let n = len - 2;
    // Layer 1 by recursion: N_s = Σ_k e^{−p̃k} x_{s−1−k}, K_s = Σ_k k e^{−p̃k} x_{s−1−k}.
    let Scratch { y, dy, rho, target } = buf;
    y.resize(n, 0.0);
    dy.resize(n, 0.0);
    let (mut num, mut kum) = (x[0], 0.0);
    for s in 2..len {
        let (z, zk) = (sh.z[s], sh.zk[s]);
        let ys = num / z;
        y[s - 2] = ys;
        dy[s - 2] = ys * zk / z - kum / z;
        kum = sh.decay * (kum + num);
        num = x[s - 1] + sh.decay * num;
    }

    let (t1, t2) = tgt.eval_with(x, target);
    let xl = x[len - 1];
    let v = prm.w_q * prm.w_k;

    // 4-gram head.
    let c: f64 = sh.pi.iter().zip(y.iter()).map(|(p, y)| p * y).sum();
    let c_lag: f64 = sh.pi.iter().zip(y.iter()).enumerate().map(|(k, (p, y))| p * y * (len - 3 - k) as f64).sum();
    let r1 = prm.g * c - t1;

    // Induction head.
    rho.clear();
    rho.extend(y.iter().map(|ys| xl * v * ys));
    let m = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rho.iter_mut().for_each(|l| *l = (*l - m).exp());
    let sum: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|r| *r /= sum);
    let e: f64 = rho.iter().enumerate().map(|(k, r)| r * x[k + 1]).sum();
    let r2 = prm.h * e - t2;

    let mut g_v = 0.0;
    let mut g_p1 = 0.0;
    for k in 0..n {
        // ∂o₂/∂ℓ_s = h ρ_s (x_s − e).
        let dl = prm.h * rho[k] * (x[k + 1] - e);
        g_v += dl * xl * y[k];
        let dy_loss = r1 * prm.g * sh.pi[k] + r2 * dl * xl * v;
        g_p1 += dy_loss * dy[k];
    }
    acc[0] += g_p1;
    acc[1] += r1 * c;
    acc[2] += r1 * prm.g * (sh.nu * c - c_lag);
    acc[3] += r2 * e;
    acc[4] += r2 * g_v * prm.w_k;
    acc[5] += r2 * g_v * prm.w_q;
    acc[6] += 0.5 * r1 * r1;
    acc[7] += 0.5 * r2 * r2;
}

/// Losses and exact gradient of the batch `xs` (one sequence per row).
pub fn batch_objective(prm: &ReducedParams, xs: &Matrix, tgt: &MixedTarget) -> BatchEval {
    let len = xs.cols();
    assert!(len >= 5, "sequence length {len} must be at least 5");
    let sh = Shared::new(prm, len);
    let mut acc = [0.0; N_PARAMS + 2];
    let mut buf = Scratch::default();
    for i in 0..xs.rows() {
        sequence_terms(xs.row(i), prm, tgt, &sh, &mut buf, &mut acc);
    }
    let b = xs.rows() as f64;
    let mut grad = [0.0; N_PARAMS];
    for (g, a) in grad.iter_mut().zip(&acc) {
        *g = a / b;
    }
    BatchEval { l_g4: acc[6] / b, l_ih2: acc[7] / b, grad }
}

/// First-layer outputs `y_s`, `s = 2..L−1`, computed directly from the softmax.
pub fn first_layer_outputs(x: &[f64], p1: f64) -> Vec<f64> {
    (2..x.len())
        .map(|s| {
            let logits: Vec<f64> = (1..s).map(|tau| -p1 * (s - 1 - tau) as f64).collect();
            softmax_dot(&logits, |k| x[k])
        })
        .collect()
}
