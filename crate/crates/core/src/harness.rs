//! Seeded trials, multi-seed experiments and their summary statistics.
//!
//! Seeds: every trial of an experiment runs on `ChaCha8Rng::seed_from_u64(s)` with
//! `s = mix64(mix64(master) ^ (opt << 48 | t_index << 32 | seed_index))`. `mix64`
//! is the SplitMix64 finalizer, a bijection on `u64`, so for a fixed master seed
//! distinct `(optimizer, T, seed)` triples (below 2¹⁶, 2¹⁶ and 2³² respectively)
//! always receive distinct stream seeds.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{EpsilonTrace, InvariantCounts, InvariantMonitor};
use crate::error::{Error, Result};
use crate::optim::{step, GradientPair, HyperParams, Method, OptimizerState};
use crate::problems::{ProblemConstants, SharedProblem, StochasticProblem};
use crate::scalar::Scalar;
use crate::theory::{practical_params, theorem_params, ScheduleKind, TheoremInputs};
use crate::vector::Vector;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_trial_seed(master: u64, optimizer: usize, t_index: usize, seed_index: usize) -> u64 {
    let packed = ((optimizer as u64 & 0xFFFF) << 48)
        | ((t_index as u64 & 0xFFFF) << 32)
        | (seed_index as u64 & 0xFFFF_FFFF);
    mix64(mix64(master) ^ packed)
}

/// Everything known about iteration `t` once `x_{t+1}` has been computed.
pub struct StepView<'a, S> {
    pub t: usize,
    pub eta: S,
    /// `x_t`.
    pub x: &'a Vector<S>,
    /// `x_{t+1}`.
    pub next_x: &'a Vector<S>,
    /// `m_{t-1}` (zeros at `t = 1`).
    pub m_prev: &'a Vector<S>,
    pub m: &'a Vector<S>,
    pub v: &'a Vector<S>,
    pub update: &'a Vector<S>,
    pub grads: &'a GradientPair<S>,
    /// `∇F(x_t)`.
    pub grad_exact: &'a Vector<S>,
    /// `∇F(x_{t-1})`; equals `∇F(x_1)` at `t = 1`.
    pub grad_exact_prev: &'a Vector<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAbort {
    pub t: usize,
    pub reason: String,
}

/// Runs `horizon` iterations from the problem's `x₁`, drawing one fresh sample per
/// iteration and sharing it between the two STORM gradient evaluations.
pub fn drive<S: Scalar>(
    problem: &dyn StochasticProblem<S>,
    method: Method,
    hp: &HyperParams<S>,
    horizon: usize,
    seed: u64,
    observer: &mut dyn FnMut(&StepView<'_, S>),
) -> std::result::Result<OptimizerState<S>, TrialAbort> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OptimizerState::new(problem.constants().x_init.clone());
    let abort = |t: usize, e: Error| TrialAbort {
        t,
        reason: e.to_string(),
    };
    let mut grad_prev_exact = problem.exact_grad(&state.x).map_err(|e| abort(1, e))?;
    for t in 1..=horizon {
        let xi = problem.draw_noise(&mut rng);
        let curr = problem.stoch_grad(&state.x, &xi).map_err(|e| abort(t, e))?;
        let grads = if method.uses_prev_grad() && t > 1 {
            let prev = problem.stoch_grad(&state.prev_x, &xi).map_err(|e| abort(t, e))?;
            GradientPair::new(curr, prev)
        } else {
            GradientPair::current_only(curr)
        };
        let next = step(method, &state, &grads, hp).map_err(|e| abort(t, e))?;
        let grad_exact = problem.exact_grad(&state.x).map_err(|e| abort(t, e))?;
        observer(&StepView {
            t,
            eta: hp.eta_at(t),
            x: &state.x,
            next_x: &next.x,
            m_prev: &state.m,
            m: &next.m,
            v: &next.v,
            update: &next.last_update,
            grads: &grads,
            grad_exact: &grad_exact,
            grad_exact_prev: &grad_prev_exact,
        });
        grad_prev_exact = grad_exact;
        state = next;
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub loss: f64,
    pub grad_l1: f64,
    pub grad_l2: f64,
    pub eps_l1: Option<f64>,
    pub step_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOptions {
    /// Record `‖ε_t‖₁ = ‖m_t − ∇F(x_t)‖₁` per row.
    pub collect_diagnostics: bool,
    pub keep_rows: bool,
    /// Rows beyond this are thinned to a fixed stride.
    pub max_rows: usize,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            collect_diagnostics: false,
            keep_rows: true,
            max_rows: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub method: Method,
    pub seed: u64,
    pub params: HyperParams<f64>,
    pub horizon: usize,
    pub stride: usize,
    pub rows: Vec<TraceRow>,
    /// `min_{t ≤ T} ‖∇F(x_t)‖₁` over every iteration, stored or not.
    pub headline: f64,
    /// `‖∇F(x_T)‖₁`.
    pub last_grad_l1: f64,
    pub invariants: InvariantCounts,
    pub abort: Option<TrialAbort>,
}

pub const TRACE_CSV_HEADER: [&str; 6] = ["t", "loss", "grad_l1", "grad_l2", "eps_l1", "step_l2"];

impl TrialTrace {
    /// Writes the rows as CSV with header `t,loss,grad_l1,grad_l2,eps_l1,step_l2`;
    /// `eps_l1` is left empty when it was not collected.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(TRACE_CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.loss.to_string(),
                r.grad_l1.to_string(),
                r.grad_l2.to_string(),
                r.eps_l1.map(|e| e.to_string()).unwrap_or_default(),
                r.step_l2.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs one seeded trial. Non-finite values abort the trial; the returned trace
/// then carries the abort record and the rows collected so far.
pub fn run_trial<S: Scalar>(
    problem: &dyn StochasticProblem<S>,
    method: Method,
    hp: &HyperParams<S>,
    horizon: usize,
    seed: u64,
    opts: TrialOptions,
) -> Result<TrialTrace> {
    hp.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidExperiment("horizon must be at least 1".into()));
    }
    let stride = horizon.div_ceil(opts.max_rows.max(1)).max(1);
    let mut rows = Vec::new();
    let mut headline = f64::INFINITY;
    let mut last = f64::NAN;
    let mut monitor = InvariantMonitor::new(method, hp);
    let mut value_error = None;
    let result = drive(problem, method, hp, horizon, seed, &mut |view| {
        let grad_l1 = view.grad_exact.l1().as_f64();
        headline = headline.min(grad_l1);
        last = grad_l1;
        monitor.observe(view);
        if opts.keep_rows && (view.t - 1) % stride == 0 {
            let loss = match problem.value(view.x) {
                Ok(v) => v.as_f64(),
                Err(e) => {
                    value_error.get_or_insert(e);
                    f64::NAN
                }
            };
            let step_l2 = view.next_x.sub(view.x).map(|d| d.l2().as_f64()).unwrap_or(f64::NAN);
            let eps_l1 = opts.collect_diagnostics.then(|| {
                view.m
                    .iter()
                    .zip(view.grad_exact.iter())
                    .fold(S::zero(), |acc, (m, g)| acc + (*m - *g).abs())
                    .as_f64()
            });
            rows.push(TraceRow {
                t: view.t,
                loss,
                grad_l1,
                grad_l2: view.grad_exact.l2().as_f64(),
                eps_l1,
                step_l2,
            });
        }
    });
    if let Some(e) = value_error {
        return Err(e);
    }
    let abort = result.err();
    Ok(TrialTrace {
        method,
        seed,
        params: hp_to_f64(hp),
        horizon,
        stride,
        rows,
        headline,
        last_grad_l1: last,
        invariants: monitor.counts(),
        abort,
    })
}

fn hp_to_f64<S: Scalar>(hp: &HyperParams<S>) -> HyperParams<f64> {
    use crate::optim::StepSize;
    HyperParams {
        step: match hp.step {
            StepSize::Constant { eta } => StepSize::Constant { eta: eta.as_f64() },
            StepSize::PerStepSqrtT { scale } => StepSize::PerStepSqrtT {
                scale: scale.as_f64(),
            },
        },
        beta1: hp.beta1.as_f64(),
        beta2: hp.beta2.as_f64(),
        eps_guard: hp.eps_guard.as_f64(),
    }
}

/// Runs a trial and collects `ξ_t`, `ε_t`, `Z_t` against the exact-gradient oracle.
pub fn run_epsilon_trace<S: Scalar>(
    problem: &dyn StochasticProblem<S>,
    method: Method,
    hp: &HyperParams<S>,
    horizon: usize,
    seed: u64,
) -> std::result::Result<EpsilonTrace<S>, TrialAbort> {
    let mut trace = EpsilonTrace::with_capacity(horizon);
    drive(problem, method, hp, horizon, seed, &mut |view| trace.record(view))?;
    Ok(trace)
}

/// Empirical quantile by lower interpolation: the order statistic at index
/// `ceil(level·n) − 1`, clamped to `[0, n−1]`.
pub fn quantile(samples: &[f64], level: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::OutOfRange {
            name: "level",
            value: level,
            range: "[0, 1]",
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((level * n as f64).ceil() as isize - 1).clamp(0, n as isize - 1) as usize;
    Ok(sorted[idx])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares of `ln(metric)` on `ln(T)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some((t, m)) = points.iter().find(|(t, m)| !(*t > 0.0 && *m > 0.0)) {
        return Err(Error::DegenerateFit(format!(
            "non-positive point ({t}, {m})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, m)| m.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all horizons are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: points.len(),
    })
}

/// How each optimizer's hyperparameters are chosen for a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamMode {
    /// Parameters from the problem's declared `Δ`, `‖L‖₁`, `‖σ‖₁`.
    Theorem {
        #[serde(default)]
        beta2: f64,
        #[serde(default)]
        eps_guard: f64,
        #[serde(default)]
        delta_floor: Option<f64>,
    },
    /// `β₁ = 1 − β/T^{2/3}`, `η = α(1−β₁)^{1/4}√(1−β₂)/√T` (or `/√t`).
    Practical {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        beta1: Option<f64>,
        #[serde(default)]
        beta2: f64,
        #[serde(default)]
        per_step: bool,
        #[serde(default)]
        eps_guard: f64,
    },
    Fixed {
        eta: f64,
        #[serde(default)]
        beta1: f64,
        #[serde(default)]
        beta2: f64,
        #[serde(default)]
        eps_guard: f64,
    },
}

impl ParamMode {
    /// Hyperparameters for `method` at horizon `T`. Adam keeps its customary
    /// `(0.9, 0.999, 1e-8)` under the theorem and practical modes and only takes η.
    pub fn resolve(
        &self,
        method: Method,
        constants: &ProblemConstants<f64>,
        horizon: usize,
        confidence: f64,
    ) -> Result<HyperParams<f64>> {
        let hp = match *self {
            ParamMode::Theorem {
                beta2,
                eps_guard,
                delta_floor,
            } => {
                let inp = TheoremInputs {
                    delta: constants.delta_upper,
                    l1_norm: constants.l1_norm(),
                    sigma_l1: constants.sigma_l1(),
                    horizon,
                    beta2,
                    confidence,
                    dim: constants.x_init.dim(),
                    delta_floor,
                };
                theorem_params(&inp)?.params.with_eps_guard(eps_guard)?
            }
            ParamMode::Practical {
                alpha,
                beta,
                beta1,
                beta2,
                per_step,
                eps_guard,
            } => {
                let schedule = if per_step {
                    ScheduleKind::PerStepSqrtT
                } else {
                    ScheduleKind::ConstantT
                };
                practical_params(alpha, beta, horizon, beta1, beta2, schedule)?
                    .with_eps_guard(eps_guard)?
            }
            ParamMode::Fixed {
                eta,
                beta1,
                beta2,
                eps_guard,
            } => {
                let hp = HyperParams::new(eta, beta1, beta2)?.with_eps_guard(eps_guard)?;
                return Ok(hp);
            }
        };
        if method == Method::Adam {
            let mut adam = HyperParams::adam(1.0)?;
            adam.step = hp.step;
            return Ok(adam);
        }
        Ok(hp)
    }

    pub fn eps_guard(&self) -> f64 {
        match *self {
            ParamMode::Theorem { eps_guard, .. }
            | ParamMode::Practical { eps_guard, .. }
            | ParamMode::Fixed { eps_guard, .. } => eps_guard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub method: Method,
    /// Overrides the experiment-wide parameter mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamMode>,
}

pub struct ExperimentSpec {
    pub problem: SharedProblem<f64>,
    /// Construction parameters of the problem, echoed into the report.
    pub problem_description: serde_json::Value,
    pub optimizers: Vec<OptimizerSpec>,
    pub param_mode: ParamMode,
    pub t_grid: Vec<usize>,
    pub n_seeds: usize,
    /// `δ`; the report carries the `1 − δ` quantile.
    pub delta: f64,
    pub master_seed: u64,
    pub collect_diagnostics: bool,
    /// Number of leading seeds per cell whose full traces are returned.
    pub trace_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSummary {
    pub dim: usize,
    pub delta: f64,
    pub l1_norm: f64,
    pub sigma_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub fingerprint: String,
    pub problem: serde_json::Value,
    pub constants: ConstantsSummary,
    pub optimizers: Vec<OptimizerSpec>,
    pub param_mode: ParamMode,
    pub t_grid: Vec<usize>,
    pub n_seeds: usize,
    pub delta: f64,
    pub quantile_levels: Vec<f64>,
    pub seed_rule: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub optimizer: Method,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub params: Option<HyperParams<f64>>,
    /// Quantiles of the headline metric over the completed trials.
    pub quantiles: Vec<QuantilePoint>,
    pub n_ok: usize,
    pub n_fail: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Cell {
    pub fn quantile_at(&self, level: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|q| (q.level - level).abs() < 1e-12)
            .map(|q| q.value)
    }

    pub fn median(&self) -> Option<f64> {
        self.quantile_at(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitEntry {
    pub optimizer: Method,
    pub fit: Option<RateFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEntry {
    pub optimizer: Method,
    #[serde(flatten)]
    pub counts: InvariantCounts,
    pub aborted_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ReportConfig,
    pub master_seed: u64,
    pub cells: Vec<Cell>,
    pub rate_fits: Vec<RateFitEntry>,
    pub violations: Vec<ViolationEntry>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn rate_fit(&self, method: Method) -> Option<RateFit> {
        self.rate_fits
            .iter()
            .find(|r| r.optimizer == method)
            .and_then(|r| r.fit)
    }
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    /// Full traces of the first `trace_seeds` seeds of every cell, in cell order.
    pub traces: Vec<(usize, TrialTrace)>,
}

pub const SEED_RULE: &str =
    "splitmix64(splitmix64(master) ^ (optimizer << 48 | t_index << 32 | seed_index))";

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidExperiment(m.to_string()));
        if self.optimizers.is_empty() {
            return bad("at least one optimizer is required");
        }
        if self.optimizers.len() > 0xFFFF || self.t_grid.len() > 0xFFFF {
            return bad("too many optimizers or horizons");
        }
        if self.t_grid.is_empty() {
            return bad("t_grid must not be empty");
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) || self.t_grid[0] == 0 {
            return bad("t_grid must be strictly increasing and positive");
        }
        if self.n_seeds == 0 || self.n_seeds > u32::MAX as usize {
            return bad("n_seeds must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        self.problem.constants().validate()
    }

    pub fn quantile_levels(&self) -> Vec<f64> {
        let mut levels = vec![0.5, 0.9, 1.0 - self.delta];
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        levels
    }

    fn report_config(&self) -> Result<ReportConfig> {
        let c = self.problem.constants();
        let mut cfg = ReportConfig {
            fingerprint: String::new(),
            problem: self.problem_description.clone(),
            constants: ConstantsSummary {
                dim: c.x_init.dim(),
                delta: c.delta_upper,
                l1_norm: c.l1_norm(),
                sigma_l1: c.sigma_l1(),
            },
            optimizers: self.optimizers.clone(),
            param_mode: self.param_mode,
            t_grid: self.t_grid.clone(),
            n_seeds: self.n_seeds,
            delta: self.delta,
            quantile_levels: self.quantile_levels(),
            seed_rule: SEED_RULE.to_string(),
        };
        let canonical = serde_json::to_string(&(&cfg, self.master_seed, self.collect_diagnostics))
            .map_err(|e| Error::Io(e.to_string()))?;
        let digest = Sha256::digest(canonical.as_bytes());
        cfg.fingerprint = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(cfg)
    }
}

struct TaskResult {
    cell: usize,
    seed_index: usize,
    trace: Result<TrialTrace>,
}

/// Runs every `(optimizer, T, seed)` trial on a pool of `workers` threads and
/// reduces the results in key order, so the report does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let constants = spec.problem.constants();
    let n_t = spec.t_grid.len();
    let params: Vec<Result<HyperParams<f64>>> = spec
        .optimizers
        .iter()
        .flat_map(|o| {
            spec.t_grid.iter().map(move |&t| {
                o.params
                    .unwrap_or(spec.param_mode)
                    .resolve(o.method, constants, t, spec.delta)
            })
        })
        .collect();

    let tasks: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|cell| (0..spec.n_seeds).map(move |s| (cell, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let results: Vec<TaskResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cell, seed_index)| {
                let (oi, ti) = (cell / n_t, cell % n_t);
                let method = spec.optimizers[oi].method;
                let trace = match &params[cell] {
                    Err(e) => Err(e.clone()),
                    Ok(hp) => run_trial(
                        spec.problem.as_ref(),
                        method,
                        hp,
                        spec.t_grid[ti],
                        derive_trial_seed(spec.master_seed, oi, ti, seed_index),
                        TrialOptions {
                            collect_diagnostics: spec.collect_diagnostics,
                            keep_rows: seed_index < spec.trace_seeds,
                            ..TrialOptions::default()
                        },
                    ),
                };
                TaskResult {
                    cell,
                    seed_index,
                    trace,
                }
            })
            .collect()
    });

    let levels = spec.quantile_levels();
    let mut cells = Vec::with_capacity(params.len());
    let mut traces = Vec::new();
    let mut violations: Vec<ViolationEntry> = spec
        .optimizers
        .iter()
        .map(|o| ViolationEntry {
            optimizer: o.method,
            counts: InvariantCounts::default(),
            aborted_trials: 0,
        })
        .collect();
    let mut by_cell: Vec<Vec<TaskResult>> = (0..params.len()).map(|_| Vec::new()).collect();
    for r in results {
        by_cell[r.cell].push(r);
    }
    for (cell, mut rs) in by_cell.into_iter().enumerate() {
        rs.sort_by_key(|r| r.seed_index);
        let (oi, ti) = (cell / n_t, cell % n_t);
        let mut metrics = Vec::new();
        let mut n_fail = 0;
        let mut error = params[cell].as_ref().err().map(|e| e.to_string());
        for r in rs {
            match r.trace {
                Ok(tr) => {
                    violations[oi].counts.merge(&tr.invariants);
                    if tr.abort.is_some() {
                        n_fail += 1;
                        violations[oi].aborted_trials += 1;
                    } else {
                        metrics.push(tr.headline);
                    }
                    if r.seed_index < spec.trace_seeds {
                        traces.push((cell, tr));
                    }
                }
                Err(e) => {
                    n_fail += 1;
                    error.get_or_insert(e.to_string());
                }
            }
        }
        let quantiles = if metrics.is_empty() {
            Vec::new()
        } else {
            levels
                .iter()
                .map(|&level| {
                    Ok(QuantilePoint {
                        level,
                        value: quantile(&metrics, level)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        cells.push(Cell {
            optimizer: spec.optimizers[oi].method,
            horizon: spec.t_grid[ti],
            params: params[cell].as_ref().ok().copied(),
            quantiles,
            n_ok: metrics.len(),
            n_fail,
            error,
        });
    }

    let rate_fits = spec
        .optimizers
        .iter()
        .enumerate()
        .map(|(oi, o)| {
            let points: Vec<(f64, f64)> = cells[oi * n_t..(oi + 1) * n_t]
                .iter()
                .filter_map(|c| c.median().map(|m| (c.horizon as f64, m)))
                .collect();
            match fit_rate(&points) {
                Ok(fit) => RateFitEntry {
                    optimizer: o.method,
                    fit: Some(fit),
                    note: None,
                },
                Err(e) => RateFitEntry {
                    optimizer: o.method,
                    fit: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();

    Ok(ExperimentOutcome {
        report: ExperimentReport {
            config: spec.report_config()?,
            master_seed: spec.master_seed,
            cells,
            rate_fits,
            violations,
        },
        traces,
    })
}
