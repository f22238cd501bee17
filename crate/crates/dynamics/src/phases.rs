//! Phase detection and Lyapunov monitors along a gradient-flow trajectory.

use serde::{Deserialize, Serialize};

use crate::closed_form::psi;
use crate::flow::{GfParams, GfState, GfTrajectory};

/// Loss fractions that delimit the phases, plus the tolerance used to decide
/// that `w_V2` has reached its quasi-equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    /// Phase I ends when `L_G4 ≤ g4_fraction · L_G4(0)`.
    pub g4_fraction: f64,
    /// Phase II ends when `L_IH2 ≤ plateau_fraction · L_IH2(T_o)`.
    pub plateau_fraction: f64,
    /// Phase III ends when `L_IH2 ≤ done_fraction · L_IH2(T_o)`.
    pub done_fraction: f64,
    /// Relative gap to the `h`-nullcline below which `h` counts as equilibrated.
    pub equilibrium_tol: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        Self { g4_fraction: 0.01, plateau_fraction: 0.99, done_fraction: 0.01, equilibrium_tol: 1e-3 }
    }
}

/// Phase times of a trajectory; `None` where a threshold was never crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub t_i: Option<f64>,
    /// First time `w_V2 ≥ h★`.
    pub t_h_star: Option<f64>,
    /// Observation time: first time `w_V2 ≥ h★` and `w_V2` is within
    /// `equilibrium_tol` of its nullcline `h★ψ(w²+w★²)/ψ(2w²)`.
    pub t_o: Option<f64>,
    pub t_ii: Option<f64>,
    pub t_iii: Option<f64>,
    /// `T_II`, `T_III` measured against `L_IH2(0)` instead of `L_IH2(T_o)`.
    pub t_ii_from_start: Option<f64>,
    pub t_iii_from_start: Option<f64>,
    /// `L_IH2(T_I) / L_IH2(0)`.
    pub l_ih2_ratio_at_t_i: Option<f64>,
    /// Least-squares slope of `ln w_KQ(t)` on `[0, T_II]`.
    pub growth_rate: Option<f64>,
    /// `w★²/((1+α★)²(L−2))`.
    pub growth_reference: f64,
    pub thresholds: PhaseThresholds,
}

impl PhaseReport {
    /// `growth_rate / growth_reference`.
    pub fn growth_ratio(&self) -> Option<f64> {
        self.growth_rate.map(|r| r / self.growth_reference)
    }
}

/// Ordinary least-squares line `y = a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let (mx, my) = (x.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((my - b * mx, b, r2))
}

/// Extracts the phase times of `traj`.
pub fn detect_phases(traj: &GfTrajectory, th: &PhaseThresholds) -> PhaseReport {
    let prm = &traj.params;
    let pts = &traj.points;
    let (hs, ws2) = (prm.h_star(), prm.w_star * prm.w_star);
    let first = |from: usize, pred: &dyn Fn(usize) -> bool| (from..pts.len()).find(|&i| pred(i));

    let g0 = pts[0].l_g4;
    let ih0 = pts[0].l_ih2;
    let i_i = first(0, &|i| pts[i].l_g4 <= th.g4_fraction * g0);
    let i_h = first(0, &|i| pts[i].state.h >= hs);
    let i_o = first(0, &|i| {
        let s = pts[i].state;
        let w2 = s.w * s.w;
        let h_eq = hs * psi(w2 + ws2) / psi(2.0 * w2);
        s.h >= hs && (h_eq - s.h) / h_eq <= th.equilibrium_tol
    });
    let after = |io: Option<usize>, base: f64, frac: f64| io.and_then(|o| first(o + 1, &|i| pts[i].l_ih2 <= frac * base)).map(|i| pts[i].t);
    let ih_o = i_o.map(|o| pts[o].l_ih2);
    let t_ii = ih_o.and_then(|b| after(i_o, b, th.plateau_fraction));
    let t_iii = ih_o.and_then(|b| after(i_o, b, th.done_fraction));
    let growth_rate = t_ii.and_then(|end| {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().filter(|p| p.t <= end && p.state.w > 0.0).map(|p| (p.t, p.state.w.ln())).unzip();
        linear_fit(&x, &y).map(|(_, b, _)| b)
    });
    PhaseReport {
        t_i: i_i.map(|i| pts[i].t),
        t_h_star: i_h.map(|i| pts[i].t),
        t_o: i_o.map(|i| pts[i].t),
        t_ii,
        t_iii,
        t_ii_from_start: after(Some(0), ih0, th.plateau_fraction),
        t_iii_from_start: after(Some(0), ih0, th.done_fraction),
        l_ih2_ratio_at_t_i: i_i.map(|i| pts[i].l_ih2 / ih0),
        growth_rate,
        growth_reference: prm.growth_reference(),
        thresholds: *th,
    }
}

/// `½(u² + v²)` with `u = e^{−p}`, `v = u g★ + (g★ − g)`.
pub fn lyapunov_g4(s: &GfState, prm: &GfParams) -> f64 {
    let gs = prm.g_star();
    let u = (-s.p).exp();
    let v = u * gs + (gs - s.g);
    0.5 * (u * u + v * v)
}

/// `½((w² − w★²)² + (h − h★)²)`.
pub fn lyapunov_ih(s: &GfState, prm: &GfParams) -> f64 {
    0.5 * ((s.w * s.w - prm.w_star * prm.w_star).powi(2) + (s.h - prm.h_star()).powi(2))
}

/// Guaranteed decay rate of [`lyapunov_ih`] once `h` has turned: `v★h★²/(4(L−2))`.
pub fn lyapunov_ih_rate(prm: &GfParams) -> f64 {
    prm.w_star.powi(2) * prm.h_star().powi(2) / (4.0 * (prm.len - 2) as f64)
}

/// Distance to the fixed point `(g★, h★, p = ∞, w★)`:
/// `max(|g − g★|, |h − h★|, |w − w★|, e^{−p})`.
pub fn fixed_point_distance(s: &GfState, prm: &GfParams) -> f64 {
    [(s.g - prm.g_star()).abs(), (s.h - prm.h_star()).abs(), (s.w - prm.w_star).abs(), (-s.p).exp()]
        .into_iter()
        .fold(0.0, f64::max)
}
