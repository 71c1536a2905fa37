//! Subcommand implementations. Each returns the text to print on success.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use signstorm::diagnostics::{run_diagnostic_suite, SuiteReport};
use signstorm::harness::{run_experiment, ExperimentReport};
use signstorm::theory::{theorem_bound_terms, theorem_params, TheoremInputs};
use signstorm::Method;

use crate::chart::{render, ChartKind};
use crate::config::{ConfigLoadError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "signstorm", version, about = "Generalized SignSTORM experiments and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment grid of a config; writes the report, traces and charts.
    Run { config: PathBuf },
    /// Run the diagnostic suite for the config's problem and parameter mode.
    Check { config: PathBuf },
    /// Render a chart from a report.
    Report {
        report: PathBuf,
        #[arg(long, value_enum)]
        chart: ChartKind,
        /// Output file; defaults to the chart name next to the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print theorem-mode parameters and the reference bound for given constants.
    Params {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        l1: f64,
        #[arg(long)]
        sigma_l1: f64,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0.0)]
        beta2: f64,
        #[arg(long, default_value_t = 0.05)]
        confidence: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long)]
        delta_floor: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    CheckFailed(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::CheckFailed(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<signstorm::Error> for CliError {
    fn from(e: signstorm::Error) -> Self {
        match e {
            signstorm::Error::Io(m) => CliError::Io(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ConfigLoadError> for CliError {
    fn from(e: ConfigLoadError) -> Self {
        match e {
            ConfigLoadError::Io(m) => CliError::Io(m),
            ConfigLoadError::Invalid(m) => CliError::Config(m),
        }
    }
}

/// Worker count from `SIGNSTORM_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("SIGNSTORM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn to_json(value: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub report: PathBuf,
    pub traces: Vec<PathBuf>,
    pub charts: Vec<PathBuf>,
}

/// Everything `run` writes lives under the configured output directory.
pub fn cmd_run(config_path: &Path, workers: usize) -> Result<RunOutputs, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let out_dir = cfg.resolved_output_dir(config_path);
    let spec = cfg.experiment_spec().map_err(CliError::Config)?;
    let outcome = run_experiment(&spec, workers)?;
    let n_t = spec.t_grid.len();

    let report_path = out_dir.join("report.json");
    write_file(&report_path, to_json(&outcome.report)?)?;

    let mut traces = Vec::new();
    let mut last_cell = usize::MAX;
    let mut k = 0;
    for (cell, trace) in &outcome.traces {
        if *cell != last_cell {
            last_cell = *cell;
            k = 0;
        }
        let name = format!(
            "{}_T{}_seed{}.csv",
            spec.optimizers[cell / n_t].method,
            spec.t_grid[cell % n_t],
            k
        );
        k += 1;
        let path = out_dir.join("traces").join(name);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        write_file(&path, buf)?;
        traces.push(path);
    }

    let mut charts = Vec::new();
    for kind in [ChartKind::ConvergenceBands, ChartKind::RateFit] {
        let path = out_dir.join("charts").join(kind.file_name());
        write_file(&path, render(&outcome.report, kind))?;
        charts.push(path);
    }
    Ok(RunOutputs {
        report: report_path,
        traces,
        charts,
    })
}

/// Runs the suite, writes `check.json` in the output directory and fails with
/// `CheckFailed` iff a deterministic checker failed.
pub fn cmd_check(config_path: &Path, workers: usize) -> Result<SuiteReport, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let out_dir = cfg.resolved_output_dir(config_path);
    let problem = cfg.build_problem().map_err(CliError::Config)?;
    let hp = cfg.param_mode.resolve(
        Method::SignStorm,
        problem.constants(),
        cfg.check.horizon,
        cfg.check.confidence,
    )?;
    let report = run_diagnostic_suite(problem.as_ref(), &hp, &cfg.check, workers)?;
    write_file(&out_dir.join("check.json"), to_json(&report)?)?;
    if report.deterministic_failure() {
        let failed: Vec<&str> = report
            .verdicts
            .iter()
            .filter(|v| {
                v.class == signstorm::diagnostics::CheckClass::Deterministic
                    && v.status == signstorm::diagnostics::CheckStatus::Fail
            })
            .map(|v| v.checker.as_str())
            .collect();
        return Err(CliError::CheckFailed(failed.join(", ")));
    }
    Ok(report)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("malformed report {}: {e}", path.display())))
}

pub fn cmd_report(report_path: &Path, kind: ChartKind, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let report = load_report(report_path)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => report_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(kind.file_name()),
    };
    write_file(&path, render(&report, kind))?;
    Ok(path)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_params(
    delta: f64,
    l1: f64,
    sigma_l1: f64,
    horizon: usize,
    beta2: f64,
    confidence: f64,
    dim: usize,
    delta_floor: Option<f64>,
) -> Result<String, CliError> {
    let inp = TheoremInputs {
        delta,
        l1_norm: l1,
        sigma_l1,
        horizon,
        beta2,
        confidence,
        dim,
        delta_floor,
    };
    let choice = theorem_params(&inp)?;
    let bound = theorem_bound_terms(&inp, choice.rho)?;
    to_json(&serde_json::json!({
        "beta1": choice.params.beta1,
        "beta2": choice.params.beta2,
        "eta": choice.params.eta_at(1),
        "rho": choice.rho,
        "c_rho": choice.c_rho,
        "delta_floored": choice.delta_floored,
        "bound": bound.total(),
        "bound_terms": bound,
    }))
}

/// Dispatches a parsed command line and returns what to print on success.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let workers = worker_count();
    match cli.command {
        Command::Run { config } => {
            let out = cmd_run(&config, workers)?;
            Ok(format!("wrote {}", out.report.display()))
        }
        Command::Check { config } => to_json(&cmd_check(&config, workers)?),
        Command::Report { report, chart, out } => {
            let path = cmd_report(&report, chart, out.as_deref())?;
            Ok(format!("wrote {}", path.display()))
        }
        Command::Params {
            delta,
            l1,
            sigma_l1,
            horizon,
            beta2,
            confidence,
            dim,
            delta_floor,
        } => cmd_params(delta, l1, sigma_l1, horizon, beta2, confidence, dim, delta_floor),
    }
}
