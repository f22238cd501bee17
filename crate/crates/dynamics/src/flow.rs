//! Stage-II gradient flow of `θ = (w_V1, w_V2, p, w_KQ) = (g, h, p, w)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::closed_form::{g_star, grad_g4, grad_ih2, h_star, loss_g4, loss_ih2};
use crate::{DynamicsError, Result};

/// `e^{−p}` underflows past this; `p` is clamped here and treated as `+∞`.
pub const P_CAP: f64 = 700.0;

/// Hyperparameters of the mixed target and the initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfParams {
    pub alpha_star: f64,
    pub w_star: f64,
    pub len: usize,
    pub sigma_init: f64,
}

impl Default for GfParams {
    /// `α★ = 1, w★ = 0.49, σ_init = 0.01, L = 40`.
    fn default() -> Self {
        Self { alpha_star: 1.0, w_star: 0.49, len: 40, sigma_init: 0.01 }
    }
}

impl GfParams {
    pub fn validate(&self) -> Result<()> {
        if self.len < 5 {
            return Err(DynamicsError::Invalid(format!("L = {} must be at least 5", self.len)));
        }
        if !(self.w_star > 0.0 && self.w_star < std::f64::consts::FRAC_1_SQRT_2) {
            return Err(DynamicsError::Invalid(format!("w★ = {} must lie in (0, 1/√2)", self.w_star)));
        }
        if !(self.alpha_star > 0.0 && self.alpha_star.is_finite()) {
            return Err(DynamicsError::Invalid(format!("α★ = {} must be positive", self.alpha_star)));
        }
        if !(self.sigma_init > 0.0 && self.sigma_init < 1.0) {
            return Err(DynamicsError::Invalid(format!("σ_init = {} must lie in (0, 1)", self.sigma_init)));
        }
        Ok(())
    }

    pub fn g_star(&self) -> f64 {
        g_star(self.alpha_star)
    }

    pub fn h_star(&self) -> f64 {
        h_star(self.alpha_star)
    }

    /// `θ(0) = (σ, σ, σ, σ)`.
    pub fn initial_state(&self) -> GfState {
        let s = self.sigma_init;
        GfState { g: s, h: s, p: s, w: s }
    }

    /// `50 (1+α★)² L ln(1/σ) / w★²`.
    pub fn default_t_end(&self) -> f64 {
        50.0 * (1.0 + self.alpha_star).powi(2) * self.len as f64 * (1.0 / self.sigma_init).ln() / self.w_star.powi(2)
    }

    /// Lower reference for the `w_KQ` growth exponent, `w★²/((1+α★)²(L−2))`.
    pub fn growth_reference(&self) -> f64 {
        self.w_star.powi(2) / ((1.0 + self.alpha_star).powi(2) * (self.len - 2) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfState {
    /// `w_V1`, the 4-gram value weight.
    pub g: f64,
    /// `w_V2`, the induction value weight.
    pub h: f64,
    /// Second-layer slope of the 4-gram head.
    pub p: f64,
    /// `w_KQ`, with `w_Q = w_K = w`.
    pub w: f64,
}

impl GfState {
    fn axpy(&self, a: f64, d: &GfState) -> GfState {
        GfState { g: self.g + a * d.g, h: self.h + a * d.h, p: self.p + a * d.p, w: self.w + a * d.w }
    }

    pub fn is_finite(&self) -> bool {
        self.g.is_finite() && self.h.is_finite() && self.p.is_finite() && self.w.is_finite()
    }
}

pub fn loss_g4_at(s: &GfState, prm: &GfParams) -> f64 {
    loss_g4(s.p, s.g, prm.alpha_star, prm.len)
}

pub fn loss_ih2_at(s: &GfState, prm: &GfParams) -> Result<f64> {
    loss_ih2(s.w, s.h, prm.alpha_star, prm.w_star, prm.len)
}

/// `dθ/dt = −∇L(θ)`. The `(p, g)` and `(w, h)` pairs do not interact.
pub fn gf_rhs(s: &GfState, prm: &GfParams) -> Result<GfState> {
    let (dp, dg) = grad_g4(s.p, s.g, prm.alpha_star, prm.len);
    let (dw, dh) = grad_ih2(s.w, s.h, prm.alpha_star, prm.w_star, prm.len)?;
    Ok(GfState { g: dg, h: dh, p: dp, w: dw })
}

fn rk4_step(s: &GfState, prm: &GfParams, dt: f64) -> Result<GfState> {
    let k1 = gf_rhs(s, prm)?;
    let k2 = gf_rhs(&s.axpy(0.5 * dt, &k1), prm)?;
    let k3 = gf_rhs(&s.axpy(0.5 * dt, &k2), prm)?;
    let k4 = gf_rhs(&s.axpy(dt, &k3), prm)?;
    let mut next = GfState {
        g: s.g + dt / 6.0 * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g),
        h: s.h + dt / 6.0 * (k1.h + 2.0 * k2.h + 2.0 * k3.h + k4.h),
        p: s.p + dt / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
        w: s.w + dt / 6.0 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w),
    };
    next.p = next.p.min(P_CAP);
    // The end point must also be admissible.
    gf_rhs(&next, prm)?;
    Ok(next)
}

/// Advances by `dt`, splitting into `2^k` substeps (`k ≤ 20`) when a full
/// step would leave the loss domain.
fn guarded_step(s: &GfState, prm: &GfParams, dt: f64, t: f64) -> Result<GfState> {
    for halvings in 0..=20u32 {
        let pieces = 1u64 << halvings;
        let h = dt / pieces as f64;
        let mut cur = *s;
        let mut ok = true;
        for _ in 0..pieces {
            match rk4_step(&cur, prm, h) {
                Ok(n) => cur = n,
                Err(DynamicsError::Domain { .. }) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            return Ok(cur);
        }
    }
    Err(DynamicsError::StepFailure { t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: GfState,
    pub l_g4: f64,
    pub l_ih2: f64,
}

impl TrajectoryPoint {
    pub fn total(&self) -> f64 {
        self.l_g4 + self.l_ih2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfTrajectory {
    pub params: GfParams,
    pub dt: f64,
    pub points: Vec<TrajectoryPoint>,
}

/// Header of the trajectory CSV.
pub const TRAJECTORY_COLUMNS: [&str; 8] = ["t", "w_V1", "w_V2", "p", "w_KQ", "L_G4", "L_IH2", "L_total"];

impl GfTrajectory {
    /// Writes the trajectory as CSV with [`TRAJECTORY_COLUMNS`].
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_COLUMNS)?;
        for pt in &self.points {
            let s = pt.state;
            w.write_record([pt.t, s.g, s.h, s.p, s.w, pt.l_g4, pt.l_ih2, pt.total()].map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectories hold at least the initial point")
    }
}

fn point(t: f64, s: GfState, prm: &GfParams) -> Result<TrajectoryPoint> {
    Ok(TrajectoryPoint { t, state: s, l_g4: loss_g4_at(&s, prm), l_ih2: loss_ih2_at(&s, prm)? })
}

/// Fixed-step RK4 on `[0, t_end]`, recording every `record_every` steps and the
/// final state.
pub fn integrate_gf(prm: &GfParams, init: GfState, dt: f64, t_end: f64, record_every: usize) -> Result<GfTrajectory> {
    prm.validate()?;
    if !(dt > 0.0 && t_end >= 0.0 && record_every >= 1) {
        return Err(DynamicsError::Invalid(format!("dt = {dt}, t_end = {t_end}, record_every = {record_every}")));
    }
    let steps = (t_end / dt).round() as usize;
    let mut points = vec![point(0.0, init, prm)?];
    let mut s = init;
    for i in 1..=steps {
        let t = i as f64 * dt;
        s = guarded_step(&s, prm, dt, t - dt)?;
        if i % record_every == 0 || i == steps {
            points.push(point(t, s, prm)?);
        }
    }
    Ok(GfTrajectory { params: *prm, dt, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = GfParams::default();
        p.validate().unwrap();
        assert!((p.default_t_end() - 50.0 * 4.0 * 40.0 * 100f64.ln() / 0.2401).abs() < 1e-9);
        assert!(GfParams { len: 4, ..p }.validate().is_err());
        assert!(GfParams { w_star: 0.71, ..p }.validate().is_err());
    }

    #[test]
    fn pairs_are_decoupled() {
        let prm = GfParams::default();
        let a = GfState { g: 0.3, h: 0.2, p: 1.5, w: 0.1 };
        let b = GfState { h: 0.45, w: 0.4, ..a };
        let (ra, rb) = (gf_rhs(&a, &prm).unwrap(), gf_rhs(&b, &prm).unwrap());
        assert_eq!((ra.p.to_bits(), ra.g.to_bits()), (rb.p.to_bits(), rb.g.to_bits()));
    }

    #[test]
    fn slope_is_capped() {
        let prm = GfParams::default();
        let s = GfState { g: 0.5, h: 0.5, p: 699.99, w: 0.49 };
        let n = guarded_step(&s, &prm, 1e6, 0.0).unwrap();
        assert!(n.p <= P_CAP);
    }

    #[test]
    fn csv_header_and_rows() {
        let prm = GfParams::default();
        let tr = integrate_gf(&prm, prm.initial_state(), 0.5, 2.0, 2).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,w_V1,w_V2,p,w_KQ,L_G4,L_IH2,L_total");
        assert_eq!(lines.len(), 1 + 3);
    }
}
