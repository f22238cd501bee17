//! Gradient flow with separate key and query scalars.
//!
//! The induction loss depends on `w_Q, w_K` only through `v = w_Q w_K`, so
//! `d(w_Q² − w_K²)/dt = −2 (∂L/∂v)(w_Q w_K − w_K w_Q) = 0`.

use serde::{Deserialize, Serialize};

use crate::closed_form::grad_ih2_v;
use crate::flow::GfParams;
use crate::{DynamicsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `max_t |(w_Q² − w_K²)(t) − (w_Q² − w_K²)(0)|`.
    pub max_drift: f64,
    pub final_wq: f64,
    pub final_wk: f64,
    pub final_h: f64,
}

fn rhs(x: [f64; 3], prm: &GfParams) -> Result<[f64; 3]> {
    let [wq, wk, h] = x;
    let (dv, dh) = grad_ih2_v(wq * wk, h, prm.alpha_star, prm.w_star, prm.len)?;
    Ok([dv * wk, dv * wq, dh])
}

/// RK4 on the `(w_Q, w_K, h)` system from `(w_Q₀, w_K₀, σ_init)`.
pub fn balance_run(prm: &GfParams, wq0: f64, wk0: f64, dt: f64, t_end: f64) -> Result<BalanceReport> {
    prm.validate()?;
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(DynamicsError::Invalid(format!("dt = {dt}, t_end = {t_end}")));
    }
    let mut x = [wq0, wk0, prm.sigma_init];
    let gap0 = wq0 * wq0 - wk0 * wk0;
    let mut drift = 0.0f64;
    let add = |x: [f64; 3], a: f64, k: [f64; 3]| [x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2]];
    for _ in 0..(t_end / dt).round() as usize {
        let k1 = rhs(x, prm)?;
        let k2 = rhs(add(x, 0.5 * dt, k1), prm)?;
        let k3 = rhs(add(x, 0.5 * dt, k2), prm)?;
        let k4 = rhs(add(x, dt, k3), prm)?;
        for j in 0..3 {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        drift = drift.max((x[0] * x[0] - x[1] * x[1] - gap0).abs());
    }
    Ok(BalanceReport { max_drift: drift, final_wq: x[0], final_wk: x[1], final_h: x[2] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_init_is_stationary() {
        let r = balance_run(&GfParams::default(), 0.0, 0.0, 0.01, 10.0).unwrap();
        assert_eq!((r.final_wq, r.final_wk), (0.0, 0.0));
        assert_eq!(r.max_drift, 0.0);
    }
}
