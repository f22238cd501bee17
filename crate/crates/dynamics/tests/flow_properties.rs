use approx::assert_relative_eq;
use indhead_dynamics::*;
use proptest::prelude::*;

fn default_run(t_end: f64) -> GfTrajectory {
    let prm = GfParams::default();
    integrate_gf(&prm, prm.initial_state(), 0.25, t_end, 4).unwrap()
}

#[test]
fn big_m_examples() {
    for p in [0.0, 0.5, 10.0] {
        assert_eq!(big_m(p, 3), 1.0);
    }
    assert_eq!(big_m(0.0, 10), 8.0);
    assert_eq!(small_m(0.0, 10), 28.0);
}

#[test]
fn squared_mass_ratio_at_most_one() {
    for len in [5, 10, 40, 160] {
        for k in 0..=2000 {
            let p = k as f64 * 0.01;
            assert!(big_m(2.0 * p, len) / big_m(p, len) <= 1.0 + 1e-15, "L={len} p={p}");
        }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, rng_seed: proptest::test_runner::RngSeed::Fixed(42), ..ProptestConfig::default() })]

    #[test]
    fn grad_g4_matches_central_difference(p in 0.05f64..8.0, g in -1.0f64..1.5, alpha in 0.2f64..3.0, len in 5usize..60) {
        let (dp, dg) = grad_g4(p, g, alpha, len);
        let e = 1e-5;
        let fp = -(loss_g4(p + e, g, alpha, len) - loss_g4(p - e, g, alpha, len)) / (2.0 * e);
        let fg = -(loss_g4(p, g + e, alpha, len) - loss_g4(p, g - e, alpha, len)) / (2.0 * e);
        prop_assert!(rel_close(dp, fp, 1e-6), "dp {dp} vs {fp}");
        prop_assert!(rel_close(dg, fg, 1e-6), "dg {dg} vs {fg}");
    }

    #[test]
    fn grad_ih2_matches_central_difference(w in -0.68f64..0.68, h in -1.0f64..1.5, alpha in 0.2f64..3.0, ws in 0.05f64..0.7, len in 5usize..60) {
        prop_assume!(w * w + ws * ws < 0.95);
        let (dw, dh) = grad_ih2(w, h, alpha, ws, len).unwrap();
        let e = 1e-6;
        let l = |w: f64, h: f64| loss_ih2(w, h, alpha, ws, len).unwrap();
        let fw = -(l(w + e, h) - l(w - e, h)) / (2.0 * e);
        let fh = -(l(w, h + e) - l(w, h - e)) / (2.0 * e);
        prop_assert!(rel_close(dw, fw, 1e-6), "dw {dw} vs {fw}");
        prop_assert!(rel_close(dh, fh, 1e-6), "dh {dh} vs {fh}");
    }

    #[test]
    fn pairs_are_decoupled(g in -1.0f64..1.0, p in 0.0f64..10.0, w1 in -0.5f64..0.5, w2 in -0.5f64..0.5, h1 in -1.0f64..1.0, h2 in -1.0f64..1.0) {
        let prm = GfParams::default();
        let a = gf_rhs(&GfState { g, h: h1, p, w: w1 }, &prm).unwrap();
        let b = gf_rhs(&GfState { g, h: h2, p, w: w2 }, &prm).unwrap();
        prop_assert_eq!((a.g.to_bits(), a.p.to_bits()), (b.g.to_bits(), b.p.to_bits()));
    }

    #[test]
    fn loss_splits_additively(g in -1.0f64..1.0, p in 0.0f64..10.0, w in -0.5f64..0.5, h in -1.0f64..1.0) {
        let prm = GfParams::default();
        let s = GfState { g, h, p, w };
        let total = loss_g4(p, g, prm.alpha_star, prm.len) + loss_ih2(w, h, prm.alpha_star, prm.w_star, prm.len).unwrap();
        prop_assert_eq!(total, loss_g4_at(&s, &prm) + loss_ih2_at(&s, &prm).unwrap());
    }
}

#[test]
fn ih2_domain_violation_is_an_error() {
    assert!(matches!(loss_ih2(0.75, 0.1, 1.0, 0.49, 10), Err(DynamicsError::Domain { .. })));
    assert!(grad_ih2(0.3, 0.1, 1.0, 0.99, 10).is_err());
}

#[test]
fn stage1_examples() {
    for pt in [0.01, 0.1, 1.0, 3.0] {
        assert!(stage1_dq(pt, 20) <= 0.0, "q′({pt}) > 0");
    }
    let frozen = Stage1Frozen { g0: 0.01, p0: 0.01, alpha: 1.0, len: 40 };
    let tr = run_stage1(0.01, &frozen, 10.0, 60_000.0);
    assert!(tr.p_tilde.iter().all(|&p| stage1_rhs(p, &frozen) > 0.0));
    assert!(tr.p_tilde.windows(2).all(|w| w[1] > w[0]));
    assert!(*tr.p_tilde.last().unwrap() >= 5.0);
}

#[test]
fn g_fixed_at_optimum_drives_slope_up() {
    let prm = GfParams::default();
    let mut s = GfState { g: prm.g_star(), h: 0.0, p: prm.sigma_init, w: 0.0 };
    for _ in 0..20_000 {
        let d = gf_rhs(&s, &prm).unwrap();
        assert!(d.p > 0.0);
        s.p += 0.1 * d.p;
    }
    assert!(s.p > 1.0);
}

#[test]
fn defaults_converge_and_descend() {
    let traj = default_run(12_000.0);
    let last = traj.last().state;
    assert!((last.w - 0.49).abs() <= 0.005, "w_KQ = {}", last.w);
    assert!((last.h - 0.5).abs() <= 0.005, "w_V2 = {}", last.h);
    assert!(traj.points.windows(2).all(|w| w[1].t > w[0].t));
    for w in traj.points.windows(2) {
        assert!(w[1].total() <= w[0].total() + 1e-10, "loss rose at t = {}", w[1].t);
        assert!(w[1].l_g4.is_finite() && w[1].l_ih2.is_finite());
    }
}

#[test]
fn halving_the_step_changes_states_little() {
    let prm = GfParams::default();
    let coarse = integrate_gf(&prm, prm.initial_state(), 0.125, 3000.0, 1).unwrap();
    let fine = integrate_gf(&prm, prm.initial_state(), 0.0625, 3000.0, 2).unwrap();
    assert_eq!(coarse.points.len(), fine.points.len());
    for (a, b) in coarse.points.iter().zip(&fine.points) {
        assert_eq!(a.t, b.t);
        for (x, y) in [(a.state.g, b.state.g), (a.state.h, b.state.h), (a.state.p, b.state.p), (a.state.w, b.state.w)] {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(y.abs()), "t = {}: {x} vs {y}", a.t);
        }
    }
}

#[test]
fn phase_report_at_defaults() {
    let traj = default_run(4000.0);
    let r = detect_phases(&traj, &PhaseThresholds::default());
    let (t_i, t_ii, t_iii) = (r.t_i.unwrap(), r.t_ii.unwrap(), r.t_iii.unwrap());
    assert!(t_i < t_ii && t_ii <= t_iii);
    assert!(r.t_h_star.unwrap() <= r.t_o.unwrap());
    let ratio = r.growth_ratio().unwrap();
    assert!((1.0..=4.0).contains(&ratio), "growth ratio {ratio}");
    let json = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<PhaseReport>(&json).unwrap(), r);
}

#[test]
fn doubling_length_roughly_doubles_plateau() {
    let t_ii = |len: usize| {
        let prm = GfParams { len, ..GfParams::default() };
        let tr = integrate_gf(&prm, prm.initial_state(), 0.25, 60.0 * len as f64, 4).unwrap();
        detect_phases(&tr, &PhaseThresholds::default()).t_ii.unwrap()
    };
    let (a, b) = (t_ii(20), t_ii(40));
    assert!((1.6..=2.4).contains(&(b / a)), "T_II ratio {}", b / a);
}

#[test]
fn lyapunov_monitors_along_default_trajectory() {
    let traj = default_run(12_000.0);
    let prm = traj.params;
    let pts = &traj.points;
    let t1g = pts.iter().position(|p| p.state.g > prm.g_star()).unwrap();
    for w in pts[t1g..].windows(2) {
        assert!(lyapunov_g4(&w[1].state, &prm) <= lyapunov_g4(&w[0].state, &prm) + 1e-15, "t = {}", w[1].t);
    }
    let turn = pts.windows(2).position(|w| w[1].state.h < w[0].state.h).unwrap();
    let (t2, g2) = (pts[turn].t, lyapunov_ih(&pts[turn].state, &prm));
    let rate = lyapunov_ih_rate(&prm);
    for p in &pts[turn..] {
        assert!(lyapunov_ih(&p.state, &prm) <= g2 * (-rate * (p.t - t2)).exp() + 1e-15, "t = {}", p.t);
    }
}

#[test]
fn balance_is_conserved() {
    let prm = GfParams::default();
    let (dt, t) = (1e-3f64, 100.0);
    let bound = 10.0 * dt.powi(4) * t;
    let equal = balance_run(&prm, prm.sigma_init, prm.sigma_init, dt, t).unwrap();
    assert!(equal.max_drift <= bound);
    assert_relative_eq!(equal.final_wq, equal.final_wk, max_relative = 1e-12);
    let unequal = balance_run(&prm, 0.05, 0.02, dt, t).unwrap();
    assert!(unequal.max_drift <= bound, "drift {}", unequal.max_drift);
    let zero = balance_run(&prm, 0.0, 0.0, dt, t).unwrap();
    assert_eq!((zero.final_wq, zero.final_wk, zero.max_drift), (0.0, 0.0, 0.0));
}

#[test]
fn trajectory_csv_has_header() {
    let prm = GfParams::default();
    let tr = integrate_gf(&prm, prm.initial_state(), 1.0, 3.0, 1).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), TRAJECTORY_COLUMNS);
    assert_eq!(rdr.records().count(), 4);
}

#[test]
fn fourth_order_holds_when_p_crosses_zero() {
    let prm = GfParams::default();
    let init = GfState { g: -0.5, h: 0.2, p: 0.02, w: 0.1 };
    let run = |dt: f64| integrate_gf(&prm, init, dt, 10.0, (0.25 / dt) as usize).unwrap();
    let (a, b, c) = (run(0.25), run(0.125), run(0.0625));
    assert!(c.points.iter().any(|pt| pt.state.p < -0.01), "p stays positive");
    let gap = |x: &GfTrajectory, y: &GfTrajectory| {
        x.points.iter().zip(&y.points).map(|(u, v)| (u.state.p - v.state.p).abs()).fold(0.0, f64::max)
    };
    let ratio = gap(&a, &b) / gap(&b, &c);
    assert!((12.0..=20.0).contains(&ratio), "error ratio {ratio}");
}
