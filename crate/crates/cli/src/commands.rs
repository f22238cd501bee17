//! Resolved per-command configurations and their runners.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context};
use indhead_constructor::{
    build_gihn, build_ih2, build_ihn, decompose_error, fit_all_lags, fit_indicator_kernel, fit_pod_bases,
    layer1_patch_error, BetaGrid, DomainBox, PodSpec,
};
use indhead_dynamics::{detect_phases, fixed_point_distance, integrate_gf, linear_fit, GfParams, PhaseReport, PhaseThresholds};
use indhead_linalg::{InputDist, Matrix, SeededRng};
use indhead_targets::{approx_error_on, sample_sequences, ErrorNorm, InductionTarget};
use indhead_trainer::{probe_first_layer, random_first_layer, sgd_train, ProbeReport, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acceptance;

/// Outcome of a command: files written and the exit code to report.
pub struct Outcome {
    pub outputs: Vec<String>,
    pub exit: i32,
}

impl Outcome {
    fn ok(outputs: Vec<String>) -> Self {
        Self { outputs, exit: crate::EXIT_OK }
    }
}

fn csv_writer(dir: &Path, name: &str) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(dir.join(name)).with_context(|| format!("creating {name}"))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {name}"))
}

fn nonempty<T: Clone>(name: &str, list: &Option<Vec<T>>, default: &[T]) -> anyhow::Result<Vec<T>> {
    match list {
        Some(v) if v.is_empty() => bail!("sweep list --{name} is empty"),
        Some(v) => Ok(v.clone()),
        None => Ok(default.to_vec()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Ih2,
    Ihn,
    Gihn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Two,
    Inf,
}

impl From<NormKind> for ErrorNorm {
    fn from(n: NormKind) -> Self {
        match n {
            NormKind::Two => ErrorNorm::Two,
            NormKind::Inf => ErrorNorm::Inf,
        }
    }
}

/// `construct`: error of an explicit construction across a sweep.
///
/// Unset fields take per-target defaults: `ih2` sweeps `p1 ∈ {2,4,6,8}` at
/// `d = 2, L = 24`; `ihn` sweeps `H ∈ {8,16,32,64}` at `n = 4, d = 1, L = 16`;
/// `gihn` sweeps `(H, M, K)` jointly through `(1,8,1) … (8,64,8)` at `n = 2, L = 16`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructConfig {
    pub target: TargetKind,
    pub seed: u64,
    pub p1: Option<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Option<Vec<usize>>,
    #[serde(rename = "M")]
    pub m: Option<Vec<usize>>,
    #[serde(rename = "K")]
    pub k: Option<Vec<usize>>,
    pub n: Option<usize>,
    /// Token dimension of `ih2`.
    pub d: usize,
    pub len: Option<usize>,
    pub samples: Option<usize>,
    pub dist: Option<InputDist>,
    /// Kernel fitting horizon; defaults to `4L`.
    pub t_max: Option<usize>,
    pub norm: NormKind,
    /// Training points per POD basis network (`gihn`).
    pub n_train: usize,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        Self {
            target: TargetKind::Ih2,
            seed: 42,
            p1: None,
            h: None,
            m: None,
            k: None,
            n: None,
            d: 2,
            len: None,
            samples: None,
            dist: None,
            t_max: None,
            norm: NormKind::Inf,
            n_train: 4000,
        }
    }
}

pub fn construct(cfg: &ConstructConfig, out: &Path) -> anyhow::Result<Outcome> {
    let mut w = csv_writer(out, "construct.csv")?;
    match cfg.target {
        TargetKind::Ih2 => {
            let p1s = nonempty("p1", &cfg.p1, &[2.0, 4.0, 6.0, 8.0])?;
            let (len, d) = (cfg.len.unwrap_or(24), cfg.d);
            let wst = Matrix::identity(d);
            let target = InductionTarget::Ih2 { w_star: wst.clone() };
            let seqs = sample_sequences(
                &mut SeededRng::new(cfg.seed),
                cfg.samples.unwrap_or(10_000),
                len,
                d,
                cfg.dist.unwrap_or(InputDist::Boolean),
            );
            let rows = p1s
                .par_iter()
                .map(|&p1| {
                    let net = build_ih2(&wst, p1)?;
                    let e = approx_error_on(&target, &net, cfg.norm.into(), &seqs)?;
                    Ok((p1, e.value, 2.0 * wst.norm_l11() * (-p1).exp()))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            w.write_record(["p1", "error", "bound"])?;
            for (p1, e, b) in rows {
                w.write_record([p1.to_string(), e.to_string(), b.to_string()])?;
            }
        }
        TargetKind::Ihn => {
            let hs = nonempty("H", &cfg.h, &[8, 16, 32, 64])?;
            let (n, len) = (cfg.n.unwrap_or(4), cfg.len.unwrap_or(16));
            if n < 2 {
                bail!("n = {n} must be at least 2");
            }
            let t_max = cfg.t_max.unwrap_or(4 * len);
            let wst = Matrix::identity(n - 1);
            let target = InductionTarget::Ihn { n, w_star: wst.clone() };
            let seqs = sample_sequences(
                &mut SeededRng::new(cfg.seed),
                cfg.samples.unwrap_or(10_000),
                len,
                1,
                cfg.dist.unwrap_or(InputDist::Boolean),
            );
            let rows = hs
                .par_iter()
                .map(|&h| {
                    let fits = fit_all_lags(n, h, t_max, &BetaGrid::default())?;
                    let net = build_ihn(n, &wst, h, &fits)?;
                    let e = approx_error_on(&target, &net, cfg.norm.into(), &seqs)?;
                    let patch = seqs.iter().try_fold(0.0f64, |m, x| layer1_patch_error(&net, n, x).map(|e| m.max(e)))?;
                    let budget: f64 = fits.iter().map(|f| f.ell1_error).sum();
                    Ok((h, e.value, patch, budget))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            w.write_record(["H", "error", "patch_error", "ell1_budget"])?;
            for (h, e, p, b) in rows {
                w.write_record([h.to_string(), e.to_string(), p.to_string(), b.to_string()])?;
            }
        }
        TargetKind::Gihn => {
            let hs = nonempty("H", &cfg.h, &[1, 2, 4, 8])?;
            let ms = nonempty("M", &cfg.m, &[8, 16, 32, 64])?;
            let ks = nonempty("K", &cfg.k, &[1, 2, 4, 8])?;
            if hs.len() != ms.len() || hs.len() != ks.len() {
                bail!("--H, --M and --K must list the same number of levels ({}, {}, {})", hs.len(), ms.len(), ks.len());
            }
            let (n, len) = (cfg.n.unwrap_or(2), cfg.len.unwrap_or(16));
            if n < 2 {
                bail!("n = {n} must be at least 2");
            }
            let t_max = cfg.t_max.unwrap_or(4 * len);
            let pod = PodSpec::synthetic(1.0, 64, n - 1)?;
            let domain = DomainBox::cube(n - 1, -0.1, 1.1);
            let seqs = sample_sequences(
                &mut SeededRng::new(cfg.seed),
                cfg.samples.unwrap_or(2000),
                len,
                1,
                cfg.dist.unwrap_or(InputDist::Uniform),
            );
            let levels: Vec<(usize, usize, usize)> = (0..hs.len()).map(|i| (hs[i], ms[i], ks[i])).collect();
            let rows = levels
                .par_iter()
                .map(|&(h, m, k)| {
                    let nets = fit_pod_bases(&pod, k, m, &domain, cfg.n_train, cfg.seed)?;
                    let fits = fit_all_lags(n, h, t_max, &BetaGrid::default())?;
                    let net = build_gihn(n, 1, &pod, k, &nets, h, &fits)?;
                    Ok(((h, m, k), decompose_error(&net, &pod, k, n, &seqs)?))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            w.write_record(["H", "M", "K", "total", "basis_term", "kernel_term", "truncation_term"])?;
            for ((h, m, k), d) in rows {
                w.write_record([
                    h.to_string(),
                    m.to_string(),
                    k.to_string(),
                    d.total.to_string(),
                    d.basis_term.to_string(),
                    d.kernel_term.to_string(),
                    d.truncation_term.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(Outcome::ok(vec!["construct.csv".into()]))
}

/// `gf`: one gradient-flow trajectory, or a sweep over `L` or `σ_init`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GfConfig {
    pub seed: u64,
    pub alpha_star: f64,
    pub w_star: f64,
    pub len: usize,
    pub sigma_init: f64,
    pub dt: f64,
    /// Integration horizon; defaults to `50 (1+α★)² L ln(1/σ) / w★²` per run.
    pub t_end: Option<f64>,
    pub record_every: usize,
    /// `L=20,40,80,160` or `sigma=1e-2,1e-3,1e-4`.
    pub sweep: Option<String>,
}

impl Default for GfConfig {
    fn default() -> Self {
        let p = GfParams::default();
        Self {
            seed: 42,
            alpha_star: p.alpha_star,
            w_star: p.w_star,
            len: p.len,
            sigma_init: p.sigma_init,
            dt: 0.25,
            t_end: None,
            record_every: 4,
            sweep: None,
        }
    }
}

/// Swept variable of `gf --sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepVar {
    L,
    #[serde(rename = "sigma")]
    Sigma,
}

/// Parses `L=20,40` or `sigma=1e-2,1e-3`.
pub fn parse_sweep(s: &str) -> anyhow::Result<(SweepVar, Vec<f64>)> {
    let Some((key, list)) = s.split_once('=') else { bail!("sweep {s:?} is not of the form KEY=v1,v2,…") };
    let var = match key.trim() {
        "L" | "len" => SweepVar::L,
        "sigma" | "sigma_init" => SweepVar::Sigma,
        k => bail!("unknown sweep variable {k:?} (expected L or sigma)"),
    };
    let values = list
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad sweep value {v:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("sweep list for {key} is empty");
    }
    if var == SweepVar::L && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
        bail!("L values must be non-negative integers");
    }
    Ok((var, values))
}

#[derive(Debug, Clone, Serialize)]
struct GfSummary {
    params: GfParams,
    dt: f64,
    t_end: f64,
    phases: PhaseReport,
    final_state: indhead_dynamics::GfState,
    fixed_point_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SweepFit {
    variable: SweepVar,
    /// Regressor: `L`, or `ln(1/σ_init)`.
    x: Vec<f64>,
    t_ii: Vec<f64>,
    intercept: f64,
    slope: f64,
    r_squared: f64,
    /// `T_II` at the last sweep value over `T_II` at the first.
    ratio_last_first: f64,
}

fn run_gf(prm: &GfParams, cfg: &GfConfig) -> anyhow::Result<(indhead_dynamics::GfTrajectory, GfSummary)> {
    prm.validate()?;
    if cfg.record_every == 0 {
        bail!("record_every must be at least 1");
    }
    let t_end = cfg.t_end.unwrap_or_else(|| prm.default_t_end());
    let traj = integrate_gf(prm, prm.initial_state(), cfg.dt, t_end, cfg.record_every)?;
    let last = traj.last().state;
    let summary = GfSummary {
        params: *prm,
        dt: cfg.dt,
        t_end,
        phases: detect_phases(&traj, &PhaseThresholds::default()),
        final_state: last,
        fixed_point_distance: fixed_point_distance(&last, prm),
    };
    Ok((traj, summary))
}

pub fn gf(cfg: &GfConfig, out: &Path) -> anyhow::Result<Outcome> {
    let base = GfParams { alpha_star: cfg.alpha_star, w_star: cfg.w_star, len: cfg.len, sigma_init: cfg.sigma_init };
    let Some(sweep) = &cfg.sweep else {
        let (traj, summary) = run_gf(&base, cfg)?;
        traj.write_csv(BufWriter::new(File::create(out.join("trajectory.csv"))?))?;
        write_json(out, "phases.json", &summary)?;
        print_phases(&summary.phases);
        return Ok(Outcome::ok(vec!["trajectory.csv".into(), "phases.json".into()]));
    };
    let (var, values) = parse_sweep(sweep)?;
    let runs = values
        .par_iter()
        .map(|&v| {
            let prm = match var {
                SweepVar::L => GfParams { len: v as usize, ..base },
                SweepVar::Sigma => GfParams { sigma_init: v, ..base },
            };
            let (traj, summary) = run_gf(&prm, cfg)?;
            let name = match var {
                SweepVar::L => format!("trajectory_L{}.csv", prm.len),
                SweepVar::Sigma => format!("trajectory_sigma{v:e}.csv"),
            };
            traj.write_csv(BufWriter::new(File::create(out.join(&name))?))?;
            Ok((v, name, summary))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut w = csv_writer(out, "sweep.csv")?;
    w.write_record(["variable", "value", "T_I", "T_II", "T_III", "fixed_point_distance"])?;
    let opt = |t: Option<f64>| t.map_or_else(String::new, |t| t.to_string());
    let label = match var {
        SweepVar::L => "L",
        SweepVar::Sigma => "sigma",
    };
    for (v, _, s) in &runs {
        w.write_record([
            label.to_string(),
            v.to_string(),
            opt(s.phases.t_i),
            opt(s.phases.t_ii),
            opt(s.phases.t_iii),
            s.fixed_point_distance.to_string(),
        ])?;
    }
    w.flush()?;
    let mut outputs: Vec<String> = runs.iter().map(|(_, n, _)| n.clone()).collect();
    outputs.push("sweep.csv".into());

    let t_ii: Vec<f64> = runs.iter().filter_map(|(_, _, s)| s.phases.t_ii).collect();
    if t_ii.len() == runs.len() && runs.len() >= 2 {
        let x: Vec<f64> = values
            .iter()
            .map(|&v| match var {
                SweepVar::L => v,
                SweepVar::Sigma => (1.0 / v).ln(),
            })
            .collect();
        if let Some((intercept, slope, r_squared)) = linear_fit(&x, &t_ii) {
            let fit = SweepFit { variable: var, ratio_last_first: t_ii[t_ii.len() - 1] / t_ii[0], x, t_ii, intercept, slope, r_squared };
            println!("T_II fit: slope {:.4}, intercept {:.2}, R² {:.4}", fit.slope, fit.intercept, fit.r_squared);
            write_json(out, "sweep_fit.json", &fit)?;
            outputs.push("sweep_fit.json".into());
        }
    } else {
        eprintln!("T_II not reached in every run; no linear fit written");
    }
    Ok(Outcome::ok(outputs))
}

fn print_phases(r: &PhaseReport) {
    let f = |t: Option<f64>| t.map_or_else(|| "—".to_string(), |t| format!("{t}"));
    println!(
        "T_I = {}, T_o = {}, T_II = {}, T_III = {}, growth/reference = {}",
        f(r.t_i),
        f(r.t_o),
        f(r.t_ii),
        f(r.t_iii),
        r.growth_ratio().map_or_else(|| "—".to_string(), |g| format!("{g:.3}"))
    );
}

#[derive(Debug, Clone, Serialize)]
struct SgdReport {
    final_params: indhead_trainer::ReducedParams,
    switch_step: Option<usize>,
    /// First step at which the 100-step trailing mean of `L_G4` / `L_IH2`
    /// falls to 1% of its initial window mean.
    l_g4_hit: Option<usize>,
    l_ih2_hit: Option<usize>,
    /// Last 100-step trailing means `(L_G4, L_IH2)`.
    final_smoothed: Option<(f64, f64)>,
    max_abs_grad: f64,
}

pub fn sgd(cfg: &TrainConfig, out: &Path) -> anyhow::Result<Outcome> {
    let run = sgd_train(cfg)?;
    run.write_csv(BufWriter::new(File::create(out.join("sgd.csv"))?))?;
    let (l_g4_hit, l_ih2_hit) = run.first_hits(0.01, 100);
    let report = SgdReport {
        final_params: run.final_params,
        switch_step: run.switch_step,
        l_g4_hit,
        l_ih2_hit,
        final_smoothed: run.smoothed(100).last().copied(),
        max_abs_grad: run.max_abs_grad,
    };
    println!("L_G4 1% at step {l_g4_hit:?}, L_IH2 1% at step {l_ih2_hit:?}");
    write_json(out, "sgd_report.json", &report)?;
    Ok(Outcome::ok(vec!["sgd.csv".into(), "sgd_report.json".into()]))
}

/// `probe`: linear probe of a constructed first layer against a random one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub len: usize,
    pub samples: usize,
    pub dist: InputDist,
    pub t_max: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { seed: 42, n: 4, h: 32, len: 16, samples: 1000, dist: InputDist::Boolean, t_max: None }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ProbeOutput {
    constructed: ProbeReport,
    random: ProbeReport,
    ratio: f64,
}

pub fn probe(cfg: &ProbeConfig, out: &Path) -> anyhow::Result<Outcome> {
    if cfg.n < 2 {
        bail!("n = {} must be at least 2", cfg.n);
    }
    let fits = fit_all_lags(cfg.n, cfg.h, cfg.t_max.unwrap_or(4 * cfg.len), &BetaGrid::default())?;
    let net = build_ihn(cfg.n, &Matrix::identity(cfg.n - 1), cfg.h, &fits)?;
    let seqs = sample_sequences(&mut SeededRng::new(cfg.seed), cfg.samples, cfg.len, 1, cfg.dist);
    let constructed = probe_first_layer(&net, cfg.n, &seqs)?;
    let random = probe_first_layer(&random_first_layer(&net, cfg.seed), cfg.n, &seqs)?;
    let ratio = constructed.loss / random.loss;
    println!("probe loss: constructed {:.4e}, random {:.4e}, ratio {ratio:.3e}", constructed.loss, random.loss);
    write_json(out, "probe.json", &ProbeOutput { constructed, random, ratio })?;
    Ok(Outcome::ok(vec!["probe.json".into()]))
}

/// `kernel`: sum-of-exponentials fits of one lag indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub seed: u64,
    pub i: usize,
    #[serde(rename = "H")]
    pub h: Option<Vec<usize>>,
    pub t_max: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { seed: 42, i: 1, h: None, t_max: 256 }
    }
}

pub fn kernel(cfg: &KernelConfig, out: &Path) -> anyhow::Result<Outcome> {
    let hs = nonempty("H", &cfg.h, &[1, 2, 4, 8, 16, 32])?;
    let fits = hs
        .par_iter()
        .map(|&h| fit_indicator_kernel(cfg.i, h, cfg.t_max, &BetaGrid::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut w = csv_writer(out, "kernel.csv")?;
    w.write_record(["i", "H_i", "T_max", "ell1_error"])?;
    for (h, f) in hs.iter().zip(&fits) {
        w.write_record([cfg.i.to_string(), h.to_string(), cfg.t_max.to_string(), f.ell1_error.to_string()])?;
    }
    w.flush()?;
    write_json(out, "kernel_fits.json", &fits)?;
    Ok(Outcome::ok(vec!["kernel.csv".into(), "kernel_fits.json".into()]))
}

/// `verify`: the acceptance suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Criteria to run; empty runs all.
    pub only: Vec<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 42, only: Vec::new() }
    }
}

pub fn verify(cfg: &VerifyConfig, out: &Path) -> anyhow::Result<Outcome> {
    if let Some(bad) = cfg.only.iter().find(|&&id| id == 0 || id > acceptance::CRITERIA) {
        bail!("no criterion {bad}; criteria are numbered 1..={}", acceptance::CRITERIA);
    }
    let results = acceptance::run_all(cfg.seed, &cfg.only, |r| println!("{}", r.line()));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    write_json(out, "verify.json", &results)?;
    Ok(Outcome { outputs: vec!["verify.json".into()], exit: if failed == 0 { crate::EXIT_OK } else { crate::EXIT_ACCEPTANCE } })
}
