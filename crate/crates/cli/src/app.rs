//! Argument parsing, configuration layering and dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use indhead_linalg::InputDist;
use indhead_trainer::{Optimizer, Stage, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::commands::{self, ConstructConfig, GfConfig, KernelConfig, NormKind, ProbeConfig, TargetKind, VerifyConfig};
use crate::{Manifest, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "indhead", version, about = "Induction-head constructions and training dynamics")]
pub struct Cli {
    /// Base random seed (default 42).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and batch evaluation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// JSON object of subcommand settings; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Error of an explicit construction across a parameter sweep.
    Construct(ConstructArgs),
    /// Integrate the reduced gradient flow and detect its phases.
    Gf(GfArgs),
    /// Train the reduced two-layer model with online SGD or Adam.
    Sgd(SgdArgs),
    /// Linear probe of a constructed first layer against a random one.
    Probe(ProbeArgs),
    /// Fit sums of exponentials to one lag indicator.
    Kernel(KernelArgs),
    /// Run the acceptance suite; exits 2 if any criterion fails.
    Verify(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Construct(_) => "construct",
            Command::Gf(_) => "gf",
            Command::Sgd(_) => "sgd",
            Command::Probe(_) => "probe",
            Command::Kernel(_) => "kernel",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ConstructArgs {
    #[arg(long, value_enum)]
    pub target: Option<TargetKind>,
    /// First-layer slopes (ih2).
    #[arg(long, value_delimiter = ',')]
    pub p1: Option<Vec<f64>>,
    /// Head counts (ihn, gihn).
    #[arg(long = "H", value_delimiter = ',')]
    #[serde(rename = "H")]
    pub h: Option<Vec<usize>>,
    /// FFN widths (gihn), one per level.
    #[arg(long = "M", value_delimiter = ',')]
    #[serde(rename = "M")]
    pub m: Option<Vec<usize>>,
    /// POD ranks (gihn), one per level.
    #[arg(long = "K", value_delimiter = ',')]
    #[serde(rename = "K")]
    pub k: Option<Vec<usize>>,
    /// Patch order n (ihn, gihn).
    #[arg(long)]
    pub n: Option<usize>,
    /// Token dimension (ih2).
    #[arg(long)]
    pub d: Option<usize>,
    /// Sequence length.
    #[arg(long)]
    pub len: Option<usize>,
    /// Number of test sequences.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dist: Option<InputDist>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long, value_enum)]
    pub norm: Option<NormKind>,
    #[arg(long)]
    pub n_train: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct GfArgs {
    /// Run at α★ = 1, w★ = 0.49, σ_init = 0.01, L = 40.
    #[arg(long, conflicts_with_all = ["alpha_star", "w_star", "len", "sigma_init"])]
    #[serde(skip)]
    pub defaults: bool,
    #[arg(long)]
    pub alpha_star: Option<f64>,
    #[arg(long)]
    pub w_star: Option<f64>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub sigma_init: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// `L=20,40,80,160` or `sigma=1e-2,1e-3,1e-4`.
    #[arg(long)]
    pub sweep: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SgdArgs {
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// I, II, joint or layerwise.
    #[arg(long)]
    pub stage: Option<Stage>,
    #[arg(long)]
    pub input: Option<InputDist>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub alpha_star: Option<f64>,
    #[arg(long)]
    pub w_star: Option<f64>,
    #[arg(long)]
    pub sigma_init: Option<f64>,
    /// First-layer slope held fixed in stage II.
    #[arg(long)]
    pub p1_frozen: Option<f64>,
    /// Layerwise: leave stage I after this many steps.
    #[arg(long, conflicts_with = "switch_slope")]
    #[serde(skip)]
    pub switch_budget: Option<usize>,
    /// Layerwise: leave stage I once the first-layer slope reaches this value.
    #[arg(long)]
    #[serde(skip)]
    pub switch_slope: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub h: Option<usize>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dist: Option<InputDist>,
    #[arg(long)]
    pub t_max: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct KernelArgs {
    /// Lag whose indicator is approximated.
    #[arg(long)]
    pub i: Option<usize>,
    #[arg(long = "H", value_delimiter = ',')]
    #[serde(rename = "H")]
    pub h: Option<Vec<usize>>,
    #[arg(long)]
    pub t_max: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<usize>>,
}

/// Shallow merge of the non-null entries of `over` into `base`.
fn merge(base: &mut Value, over: Value) {
    if let (Value::Object(b), Value::Object(o)) = (base, over) {
        for (k, v) in o {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
}

/// Defaults, then the config file, then explicit flags.
fn resolve<C: Serialize + DeserializeOwned + Default>(
    file: &Option<Value>,
    flags: impl Serialize,
    seed: Option<u64>,
) -> anyhow::Result<(C, Value)> {
    let mut v = serde_json::to_value(C::default())?;
    if let Some(f) = file {
        merge(&mut v, f.clone());
    }
    merge(&mut v, serde_json::to_value(flags)?);
    if let Some(s) = seed {
        merge(&mut v, serde_json::json!({ "seed": s }));
    }
    let cfg: C = serde_json::from_value(v).context("invalid configuration")?;
    let resolved = serde_json::to_value(&cfg)?;
    Ok((cfg, resolved))
}

fn read_config(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    anyhow::ensure!(v.is_object(), "{} must hold a JSON object", path.display());
    Ok(v)
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be at least 1");
        // Fails only if a pool already exists, in which case that pool is used.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let file = cli.config.as_deref().map(read_config).transpose()?;
    let out = cli.out.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let name = cli.command.name();

    let (resolved, seed, outcome) = match cli.command {
        Command::Construct(a) => {
            let (cfg, v): (ConstructConfig, _) = resolve(&file, a, cli.seed)?;
            println!("seed = {}", cfg.seed);
            (v, cfg.seed, commands::construct(&cfg, &out)?)
        }
        Command::Gf(a) => {
            let (cfg, v): (GfConfig, _) = resolve(&file, a, cli.seed)?;
            println!("seed = {}", cfg.seed);
            (v, cfg.seed, commands::gf(&cfg, &out)?)
        }
        Command::Sgd(a) => {
            let switch = match (a.switch_budget, a.switch_slope) {
                (Some(n), _) => Some(serde_json::json!({ "fixed_budget": n })),
                (None, Some(t)) => Some(serde_json::json!({ "slope_threshold": t })),
                _ => None,
            };
            let mut flags = serde_json::to_value(&a)?;
            if let Some(s) = switch {
                merge(&mut flags, serde_json::json!({ "switch": s }));
            }
            let (cfg, v): (TrainConfig, _) = resolve(&file, flags, cli.seed)?;
            println!("seed = {}", cfg.seed);
            (v, cfg.seed, commands::sgd(&cfg, &out)?)
        }
        Command::Probe(a) => {
            let (cfg, v): (ProbeConfig, _) = resolve(&file, a, cli.seed)?;
            println!("seed = {}", cfg.seed);
            (v, cfg.seed, commands::probe(&cfg, &out)?)
        }
        Command::Kernel(a) => {
            let (cfg, v): (KernelConfig, _) = resolve(&file, a, cli.seed)?;
            println!("seed = {}", cfg.seed);
            (v, cfg.seed, commands::kernel(&cfg, &out)?)
        }
        Command::Verify(a) => {
            let (cfg, v): (VerifyConfig, _) = resolve(&file, a, cli.seed)?;
            println!("seed = {}", cfg.seed);
            (v, cfg.seed, commands::verify(&cfg, &out)?)
        }
    };
    Manifest::new(name, resolved, seed, outcome.outputs).write(&out)?;
    Ok(outcome.exit)
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
