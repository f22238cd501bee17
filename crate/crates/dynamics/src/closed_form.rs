//! Population losses of the reduced model under Gaussian tokens.
//!
//! The 4-gram head is exact; the induction head uses the exponential
//! simplification (softmax replaced by `exp(·)/(L−2)`), under which every
//! expectation reduces to `E[e^{cXY}] = (1 − c²)^{−1/2}` for independent
//! standard normals `X, Y`.

use crate::{DynamicsError, Result};

/// For `|p|` below this the sums are evaluated term by term: the closed form of
/// `m` cancels to `O(p²)` and loses all relative accuracy as `p → 0`. The
/// direct sums are exact at `p = 0` and smooth through it, so the flow may
/// cross `p = 0` without a kink.
const P_DIRECT: f64 = 0.05;

fn check_len(len: usize) {
    assert!(len >= 3, "sequence length {len} must be at least 3");
}

/// `M(p) = Σ_{s=0}^{L−3} e^{−ps} = (1 − e^{−p(L−2)})/(1 − e^{−p})`.
pub fn big_m(p: f64, len: usize) -> f64 {
    check_len(len);
    let n = (len - 2) as f64;
    if p.abs() < P_DIRECT {
        (0..len - 2).map(|s| (-p * s as f64).exp()).sum()
    } else {
        (-p * n).exp_m1() / (-p).exp_m1()
    }
}

/// `m(p) = Σ_{s=1}^{L−3} s e^{−ps} = −M′(p)`.
pub fn small_m(p: f64, len: usize) -> f64 {
    check_len(len);
    let n = (len - 2) as f64;
    if p.abs() < P_DIRECT {
        (1..len - 2).map(|s| s as f64 * (-p * s as f64).exp()).sum()
    } else {
        let e = (-p).exp();
        (e - n * (-p * n).exp() + (n - 1.0) * (-p * (n + 1.0)).exp()) / (-p).exp_m1().powi(2)
    }
}

/// `(1 − x²)^{−1/2}`, the Gaussian moment `E[e^{xXY}]`.
pub fn psi(x: f64) -> f64 {
    1.0 / (1.0 - x * x).sqrt()
}

fn psi_prime(x: f64) -> f64 {
    x * (1.0 - x * x).powf(-1.5)
}

/// `g★ = α★/(1+α★)`.
pub fn g_star(alpha: f64) -> f64 {
    alpha / (1.0 + alpha)
}

/// `h★ = 1/(1+α★)`.
pub fn h_star(alpha: f64) -> f64 {
    1.0 / (1.0 + alpha)
}

/// `½g★² + ½g²M(2p)/M(p)² − g★g/M(p)`.
pub fn loss_g4(p: f64, g: f64, alpha: f64, len: usize) -> f64 {
    let gs = g_star(alpha);
    let m1 = big_m(p, len);
    0.5 * gs * gs + 0.5 * g * g * big_m(2.0 * p, len) / (m1 * m1) - gs * g / m1
}

/// Descent direction `(−∂L/∂p, −∂L/∂g)` of [`loss_g4`].
pub fn grad_g4(p: f64, g: f64, alpha: f64, len: usize) -> (f64, f64) {
    let gs = g_star(alpha);
    let (m1, m2) = (big_m(p, len), big_m(2.0 * p, len));
    let (d1, d2) = (small_m(p, len), small_m(2.0 * p, len));
    let dp = (g * g * d2 - g * g * m2 * d1 / m1 + gs * g * d1) / (m1 * m1);
    let dg = gs / m1 - g * m2 / (m1 * m1);
    (dp, dg)
}

fn check_ih_domain(w: f64, w_star: f64) -> Result<()> {
    let v = w * w;
    if !(2.0 * v < 1.0 && v + w_star * w_star < 1.0) {
        return Err(DynamicsError::Domain { w, w_star });
    }
    Ok(())
}

/// Exp-simplified induction-head loss
/// `[ψ(2w★²)/(1+α★)² + h²ψ(2w²) − 2hψ(w²+w★²)/(1+α★)] / (2(L−2))`.
pub fn loss_ih2(w: f64, h: f64, alpha: f64, w_star: f64, len: usize) -> Result<f64> {
    check_ih_domain(w, w_star)?;
    loss_ih2_v(w * w, h, alpha, w_star, len)
}

/// [`loss_ih2`] as a function of `v = w²` (the key–query product).
pub(crate) fn loss_ih2_v(v: f64, h: f64, alpha: f64, w_star: f64, len: usize) -> Result<f64> {
    let vs = w_star * w_star;
    if !(2.0 * v.abs() < 1.0 && (v + vs).abs() < 1.0) {
        return Err(DynamicsError::Domain { w: v.abs().sqrt(), w_star });
    }
    let hs = h_star(alpha);
    let n = (len - 2) as f64;
    Ok((hs * hs * psi(2.0 * vs) + h * h * psi(2.0 * v) - 2.0 * h * hs * psi(v + vs)) / (2.0 * n))
}

/// `(−∂L/∂v, −∂L/∂h)` of the loss written in `v = w²`.
pub(crate) fn grad_ih2_v(v: f64, h: f64, alpha: f64, w_star: f64, len: usize) -> Result<(f64, f64)> {
    let vs = w_star * w_star;
    if !(2.0 * v.abs() < 1.0 && (v + vs).abs() < 1.0) {
        return Err(DynamicsError::Domain { w: v.abs().sqrt(), w_star });
    }
    let hs = h_star(alpha);
    let n = (len - 2) as f64;
    let dv = (h * hs * psi_prime(v + vs) - h * h * psi_prime(2.0 * v)) / n;
    let dh = (hs * psi(v + vs) - h * psi(2.0 * v)) / n;
    Ok((dv, dh))
}

/// Descent direction `(−∂L/∂w, −∂L/∂h)` of [`loss_ih2`].
pub fn grad_ih2(w: f64, h: f64, alpha: f64, w_star: f64, len: usize) -> Result<(f64, f64)> {
    check_ih_domain(w, w_star)?;
    let (dv, dh) = grad_ih2_v(w * w, h, alpha, w_star, len)?;
    Ok((2.0 * w * dv, dh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn limits_and_small_cases() {
        assert_eq!(big_m(0.0, 10), 8.0);
        assert_eq!(small_m(0.0, 10), 28.0);
        for p in [0.0, 0.3, 5.0] {
            assert_relative_eq!(big_m(p, 3), 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn branches_agree_with_direct_sums() {
        for len in [5, 12, 40, 160] {
            for p in [-0.3, -0.051, -0.049, -1e-6, 0.0, 1e-9, 1e-6, 1e-3, 0.049, 0.051, 0.7, 3.0, 40.0] {
                let m: f64 = (0..len - 2).map(|s| (-p * s as f64).exp()).sum();
                let d: f64 = (1..len - 2).map(|s| s as f64 * (-p * s as f64).exp()).sum();
                assert_relative_eq!(big_m(p, len), m, max_relative = 1e-12);
                assert_relative_eq!(small_m(p, len), d, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn softmax_square_norm_identity() {
        let (p, len) = (0.7, 12);
        let logits: Vec<f64> = (2..len).map(|s| -p * (len - 1 - s) as f64).collect();
        let w = indhead_linalg::softmax(&logits).unwrap();
        let direct: f64 = w.iter().map(|x| x * x).sum();
        let m = big_m(p, len);
        assert!((direct - big_m(2.0 * p, len) / (m * m)).abs() < 1e-12);
    }

    #[test]
    fn g4_examples() {
        assert!(loss_g4(700.0, 0.5, 1.0, 40) < 1e-15);
        for p in [0.0, 1.0, 9.0] {
            assert_eq!(loss_g4(p, 0.0, 1.0, 20), 0.125);
        }
    }

    #[test]
    fn ih2_examples() {
        let (alpha, ws, len) = (1.0, 0.49, 10);
        assert!(loss_ih2(ws, h_star(alpha), alpha, ws, len).unwrap().abs() < 1e-15);
        // At w = 0 the loss is quadratic in h with minimizer h★ ψ(w★²).
        let hmin = h_star(alpha) * psi(ws * ws);
        assert!(grad_ih2(0.0, hmin, alpha, ws, len).unwrap().1.abs() < 1e-12);
        assert!(loss_ih2(0.72, 0.1, alpha, ws, len).is_err());
    }
}
