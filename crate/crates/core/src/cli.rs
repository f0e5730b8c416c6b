//! `noise-loom` command-line front end.
//!
//! Every subcommand reads its settings from flags, falling back to an optional
//! JSON run configuration (`--config`). Data outputs are pure functions of
//! the settings and input files; only the ensemble header's `created_at`
//! varies between runs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::envmodel::{build_rtn_env, load_model, EnvironmentModel};
use crate::error::{Error, Result};
use crate::fmt::decimal;
use crate::noisestats::{estimate_psd, pooled_autocorrelation, LagWindow};
use crate::opensim::{exact_rtn_series, replay_ensemble, Integrator, SystemSpec};
use crate::qcore::{CMatrix, DensityMatrix, C64};
use crate::quasiprob::{validity_witness, TimeGrid, DEFAULT_TABLE_BUDGET};
use crate::sampler::{load_ensemble, sample_ensemble, save_ensemble};

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "NOISE_LOOM_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "noise-loom", version, about = "Sample, replay and analyze measurement-based noise trajectories")]
pub struct Cli {
    /// JSON run configuration; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for sampling and replay
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a trajectory ensemble and write a traj-ens/1 file
    Sample(SampleArgs),
    /// Replay an ensemble through a system and write the coherence report
    Evolve(EvolveArgs),
    /// Estimate autocorrelation and power spectrum of an ensemble
    Stats(StatsArgs),
    /// Print the validity witness of an exact model as JSON
    Validate(ValidateArgs),
    /// Tabulate the closed-form telegraph-noise coherence
    Exact(ExactArgs),
}

#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    /// Model file (JSON)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Telegraph-noise switching rate
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Telegraph-noise strength (outcomes are +-omega/2)
    #[arg(long)]
    pub omega: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Measurements per trajectory
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of trajectories
    #[arg(long)]
    pub ensemble: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// Ensemble file
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// `pure-dephasing` or a system file (JSON with H_S, V_S, rho0)
    #[arg(long)]
    pub system: Option<String>,
    /// `pc` (default) or `rk4`
    #[arg(long)]
    pub integrator: Option<String>,
    /// Tracked matrix element as `i,j`
    #[arg(long)]
    pub element: Option<String>,
    /// Model the ensemble came from; enables the exact reference column
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report CSV (stdout when absent)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Largest lag index in acf.csv (default 10, capped at k - 1)
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Frequencies in psd.csv
    #[arg(long)]
    pub points: Option<usize>,
    /// Directory receiving acf.csv and psd.csv
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Largest number of measurement times
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// First measurement time
    #[arg(long)]
    pub t0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Number of rows, including t = 0 and t = tmax
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Settings file accepted by `--config`. Every field is optional and is
/// overridden by the matching flag.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub omega: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub ensemble: Option<usize>,
    pub seed: Option<u64>,
    pub system: Option<String>,
    pub integrator: Option<String>,
    pub element: Option<[usize; 2]>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub max_lag: Option<usize>,
    pub points: Option<usize>,
    pub k: Option<usize>,
    pub t0: Option<f64>,
    pub tmax: Option<f64>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            line: e.line(),
            message: format!("config: {e}"),
        })
    }
}

fn require<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidParameter(format!("missing required setting `{name}`")))
}

fn positive(value: f64, name: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter(format!("`{name}` must be positive, got {value}")))
    }
}

fn resolve_model(args: &ModelArgs, cfg: &RunConfig) -> Result<Option<EnvironmentModel>> {
    if let Some(path) = args.model.as_ref() {
        return load_model(path).map(Some);
    }
    let gamma = args.gamma.or(cfg.gamma);
    let omega = args.omega.or(cfg.omega);
    if let (Some(gamma), Some(omega)) = (gamma, omega) {
        return build_rtn_env(gamma, omega).map(Some);
    }
    if gamma.is_some() || omega.is_some() {
        return Err(Error::InvalidParameter("telegraph noise needs both `gamma` and `omega`".into()));
    }
    cfg.model.as_ref().map(load_model).transpose()
}

/// Writes to a file, or to `out` when no path is given.
fn open_output<'a>(path: Option<&Path>, out: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(out),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    #[serde(rename = "H_S")]
    h_s: Vec<[f64; 2]>,
    #[serde(rename = "V_S")]
    v_s: Vec<[f64; 2]>,
    rho0: Vec<[f64; 2]>,
}

fn matrix_from_pairs(name: &str, pairs: &[[f64; 2]]) -> Result<CMatrix> {
    let dim = (pairs.len() as f64).sqrt().round() as usize;
    if dim == 0 || dim * dim != pairs.len() {
        return Err(Error::InvalidParameter(format!(
            "{name}: {} entries do not form a square matrix",
            pairs.len()
        )));
    }
    CMatrix::from_vec(dim, pairs.iter().map(|p| C64::new(p[0], p[1])).collect())
}

fn resolve_system(selector: &str) -> Result<SystemSpec> {
    if selector == "pure-dephasing" {
        return Ok(SystemSpec::pure_dephasing());
    }
    let text = std::fs::read_to_string(selector)?;
    let file: SystemFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        line: e.line(),
        message: format!("system file: {e}"),
    })?;
    SystemSpec::new(
        matrix_from_pairs("H_S", &file.h_s)?,
        matrix_from_pairs("V_S", &file.v_s)?,
        DensityMatrix::new(matrix_from_pairs("rho0", &file.rho0)?)?,
    )
}

fn parse_element(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("element must look like `i,j`, got {text:?}"));
    let (i, j) = text.split_once(',').ok_or_else(bad)?;
    Ok((i.trim().parse().map_err(|_| bad())?, j.trim().parse().map_err(|_| bad())?))
}

pub fn cmd_sample(args: &SampleArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = require(resolve_model(&args.model, cfg)?, "model or gamma/omega")?;
    let dt = positive(require(args.dt.or(cfg.dt), "dt")?, "dt")?;
    let steps = require(args.steps.or(cfg.steps), "steps")?;
    let n_e = require(args.ensemble.or(cfg.ensemble), "ensemble")?;
    let seed = require(args.seed.or(cfg.seed), "seed")?;
    let path = require(args.output.clone().or_else(|| cfg.output.clone()), "output")?;

    let ens = sample_ensemble(&model, dt, steps, n_e, seed)?;
    save_ensemble(&ens, &path)?;

    writeln!(out, "wrote {}", path.display())?;
    writeln!(
        out,
        "N_e = {}, k = {}, dt = {}, seed = {}, model = {}",
        ens.len(),
        ens.steps(),
        decimal(ens.dt()),
        seed,
        model.label()
    )?;
    let fmt_marginal = |l: usize| {
        ens.marginal(l)
            .iter()
            .zip(ens.omega_values())
            .map(|(p, w)| format!("P({}) = {:.4}", decimal(*w), p))
            .collect::<Vec<_>>()
            .join(", ")
    };
    writeln!(out, "first marginal: {}", fmt_marginal(0))?;
    writeln!(out, "last marginal:  {}", fmt_marginal(ens.steps() - 1))?;
    Ok(())
}

pub fn cmd_evolve(args: &EvolveArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let input = require(args.input.clone().or_else(|| cfg.input.clone()), "input")?;
    let ens = load_ensemble(&input)?;
    let selector = args
        .system
        .clone()
        .or_else(|| cfg.system.clone())
        .unwrap_or_else(|| "pure-dephasing".into());
    let sys = resolve_system(&selector)?;
    let integrator: Integrator = args
        .integrator
        .clone()
        .or_else(|| cfg.integrator.clone())
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or_default();

    let mut report = replay_ensemble(&sys, &ens, integrator)?;
    let element = match (&args.element, cfg.element) {
        (Some(text), _) => Some(parse_element(text)?),
        (None, Some([i, j])) => Some((i, j)),
        (None, None) => None,
    };
    if let Some(element) = element {
        report = report.with_element(element)?;
    }

    if let Some(model) = resolve_model(&args.model, cfg)? {
        if model.fingerprint() != ens.model_fingerprint() {
            return Err(Error::InvalidParameter(format!(
                "model fingerprint {} does not match the ensemble's {}",
                model.fingerprint(),
                ens.model_fingerprint()
            )));
        }
        if let (Some(rtn), "pure-dephasing", (0, 1)) = (model.rtn_params(), selector.as_str(), report.element()) {
            let exact = exact_rtn_series(rtn.gamma, rtn.omega, report.times())?;
            report = report.with_exact(exact)?;
        }
    }

    let path = args.output.clone().or_else(|| cfg.output.clone());
    let mut sink = open_output(path.as_deref(), &mut *out)?;
    report.write_csv(&mut sink)?;
    sink.flush()?;
    drop(sink);
    if let (Some(path), Some(err)) = (path, report.error()) {
        writeln!(
            out,
            "wrote {} ({} integrator, N_e = {}, rms error {}, max error {})",
            path.display(),
            integrator,
            report.ensemble_size(),
            decimal(err.rms),
            decimal(err.max)
        )?;
    }
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let input = require(args.input.clone().or_else(|| cfg.input.clone()), "input")?;
    let ens = load_ensemble(&input)?;
    let max_lag = args.max_lag.or(cfg.max_lag).unwrap_or(10).min(ens.steps() - 1);
    let points = args.points.or(cfg.points).unwrap_or(LagWindow::default().points);
    let dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));

    let acf = pooled_autocorrelation(&ens, max_lag)?;
    let psd = estimate_psd(&ens, LagWindow { max_lag: None, points })?;
    let acf_path = dir.join("acf.csv");
    let psd_path = dir.join("psd.csv");
    let mut sink = BufWriter::new(File::create(&acf_path)?);
    acf.write_csv(&mut sink)?;
    sink.flush()?;
    let mut sink = BufWriter::new(File::create(&psd_path)?);
    psd.write_csv(&mut sink)?;
    sink.flush()?;

    writeln!(out, "wrote {} and {}", acf_path.display(), psd_path.display())?;
    if acf.values.len() > 1 && acf.values[0] != 0.0 {
        writeln!(out, "C(dt)/C(0) = {:.6}", acf.values[1] / acf.values[0])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct WitnessRow {
    k: usize,
    offdiag_mass: f64,
    kolmogorov_residual: f64,
}

#[derive(Serialize)]
struct WitnessReport {
    model: String,
    model_fingerprint: String,
    dt: f64,
    t0: f64,
    budget: usize,
    results: Vec<WitnessRow>,
}

pub fn cmd_validate(args: &ValidateArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let path = require(args.model.clone().or_else(|| cfg.model.clone()), "model")?;
    let model = load_model(&path)?;
    let env = model.as_exact().ok_or_else(|| {
        Error::InvalidParameter("validate needs an exact model (type \"exact\")".into())
    })?;
    let k_max = require(args.k.or(cfg.k).or(cfg.steps), "k")?;
    let dt = positive(require(args.dt.or(cfg.dt), "dt")?, "dt")?;
    let t0 = args.t0.or(cfg.t0).unwrap_or(0.0);
    let mut results = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let w = validity_witness(env, &TimeGrid::uniform(t0, dt, k)?)?;
        results.push(WitnessRow {
            k,
            offdiag_mass: w.offdiag_mass,
            kolmogorov_residual: w.kolmogorov_residual,
        });
    }
    let report = WitnessReport {
        model: model.label().to_string(),
        model_fingerprint: model.fingerprint().to_string(),
        dt,
        t0,
        budget: DEFAULT_TABLE_BUDGET,
        results,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    writeln!(out, "{text}")?;
    Ok(())
}

pub fn cmd_exact(args: &ExactArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let gamma = require(args.gamma.or(cfg.gamma), "gamma")?;
    let omega = require(args.omega.or(cfg.omega), "omega")?;
    let tmax = positive(require(args.tmax.or(cfg.tmax), "tmax")?, "tmax")?;
    let points = args.points.or(cfg.points).unwrap_or(101);
    if points < 2 {
        return Err(Error::InvalidParameter("need at least 2 points".into()));
    }
    let times: Vec<f64> = (0..points).map(|i| tmax * i as f64 / (points - 1) as f64).collect();
    let values = exact_rtn_series(gamma, omega, &times)?;
    let path = args.output.clone().or_else(|| cfg.output.clone());
    let mut sink = open_output(path.as_deref(), out)?;
    writeln!(sink, "t,coherence")?;
    for (t, c) in times.iter().zip(&values) {
        writeln!(sink, "{},{}", decimal(*t), decimal(*c))?;
    }
    sink.flush()?;
    Ok(())
}

/// Worker count: the environment variable wins over `--workers`, which wins
/// over the config file.
pub fn worker_count(flag: Option<usize>, cfg: &RunConfig) -> Result<Option<usize>> {
    if let Ok(text) = std::env::var(WORKERS_ENV) {
        let n: usize = text
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{WORKERS_ENV} must be a positive integer, got {text:?}")))?;
        if n == 0 {
            return Err(Error::InvalidParameter(format!("{WORKERS_ENV} must be at least 1")));
        }
        return Ok(Some(n));
    }
    match flag.or(cfg.workers) {
        Some(0) => Err(Error::InvalidParameter("workers must be at least 1".into())),
        other => Ok(other),
    }
}

/// Runs one parsed invocation, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let dispatch = |out: &mut (dyn Write + Send)| match &cli.command {
        Command::Sample(a) => cmd_sample(a, &cfg, out),
        Command::Evolve(a) => cmd_evolve(a, &cfg, out),
        Command::Stats(a) => cmd_stats(a, &cfg, out),
        Command::Validate(a) => cmd_validate(a, &cfg, out),
        Command::Exact(a) => cmd_exact(a, &cfg, out),
    };
    match worker_count(cli.workers, &cfg)? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {n} workers: {e}")))?
            .install(|| dispatch(out)),
        None => dispatch(out),
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = io::stdout();
    match run(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
