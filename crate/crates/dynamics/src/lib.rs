//! Gradient-flow analysis of the reduced two-layer model on the mixed
//! 4-gram + induction-head target.
//!
//! Stage II trains `θ = (w_V1, w_V2, p, w_KQ)` with the first layer frozen at
//! the previous-token copy. The loss splits as `L = L_G4(p, w_V1) +
//! L_IH2(w_KQ, w_V2)`, both in closed form, and the flow runs through four
//! phases: the 4-gram head is learned, the induction head sits on a plateau
//! while `w_KQ` grows exponentially, then the induction loss collapses.
//!
//! ```
//! use indhead_dynamics::{detect_phases, integrate_gf, GfParams, PhaseThresholds};
//!
//! let prm = GfParams { len: 10, ..GfParams::default() };
//! let traj = integrate_gf(&prm, prm.initial_state(), 0.5, 4000.0, 4).unwrap();
//! let report = detect_phases(&traj, &PhaseThresholds::default());
//! let (t_o, t_ii, t_iii) = (report.t_o.unwrap(), report.t_ii.unwrap(), report.t_iii.unwrap());
//! assert!(t_o < t_ii && t_ii < t_iii);
//! assert!((traj.last().state.w - prm.w_star).abs() < 1e-3);
//! ```

mod balance;
mod closed_form;
mod error;
mod flow;
mod monte_carlo;
mod phases;
mod stage1;

pub use balance::{balance_run, BalanceReport};
pub use closed_form::{big_m, g_star, grad_g4, grad_ih2, h_star, loss_g4, loss_ih2, psi, small_m};
pub use error::DynamicsError;
pub use flow::{
    gf_rhs, integrate_gf, loss_g4_at, loss_ih2_at, GfParams, GfState, GfTrajectory, TrajectoryPoint, P_CAP,
    TRAJECTORY_COLUMNS,
};
pub use monte_carlo::{mc_gaussian_identity, mc_loss_g4, mc_loss_ih2, McEstimate};
pub use phases::{
    detect_phases, fixed_point_distance, linear_fit, lyapunov_g4, lyapunov_ih, lyapunov_ih_rate, PhaseReport,
    PhaseThresholds,
};
pub use stage1::{run_stage1, stage1_dq, stage1_q, stage1_rhs, Stage1Frozen, Stage1Trajectory};

pub type Result<T> = std::result::Result<T, DynamicsError>;
