//! Empirical checks of the analysis: deterministic identities and bounds that
//! must hold on every step, and high-probability bounds measured as violation
//! frequencies over independent seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{drive, mix64, StepView};
use crate::optim::{storm_decomposition, HyperParams, Method};
use crate::problems::{verify_assumptions, ProblemConstants, StochasticProblem};
use crate::scalar::{div0, log_confidence, Scalar};
use crate::theory::c_rho;
use crate::vector::Vector;

/// Relative slack for the almost-sure inequalities.
pub const BOUND_SLACK: f64 = 1e-9;
/// Relative tolerance for the STORM split.
pub const DECOMPOSITION_TOL: f64 = 1e-12;
/// Relative tolerance for the unrolled error representation.
pub const REPRESENTATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub passed: bool,
    /// Worst observed ratio to the bound, or worst error relative to the tolerance scale.
    pub worst: f64,
    pub worst_t: Option<usize>,
    pub checked: usize,
}

impl CheckResult {
    fn empty() -> Self {
        CheckResult {
            passed: true,
            worst: 0.0,
            worst_t: None,
            checked: 0,
        }
    }

    fn observe(&mut self, t: usize, value: f64, limit: f64) {
        self.checked += 1;
        if value > self.worst || self.worst_t.is_none() {
            self.worst = self.worst.max(value);
            self.worst_t = Some(t);
        }
        if !(value <= limit) {
            self.passed = false;
        }
    }
}

fn require_unguarded<S: Scalar>(hp: &HyperParams<S>, what: &str) -> Result<()> {
    if hp.eps_guard.is_zero() {
        Ok(())
    } else {
        Err(Error::PreconditionNotMet(format!(
            "{what} requires eps_guard = 0"
        )))
    }
}

/// `η_t √(d/(1−β₂))`.
pub fn movement_bound<S: Scalar>(eta: S, dim: usize, beta2: S) -> S {
    eta * (S::from_usize_exact(dim) / (S::one() - beta2)).sqrt()
}

/// Checks `‖x_{t+1} − x_t‖₂ ≤ η_t √(d/(1−β₂))`; `step_norms[t−1]` is the norm of
/// step `t`. `worst` is the largest norm-to-bound ratio.
pub fn movement_bound_check<S: Scalar>(
    step_norms: &[S],
    dim: usize,
    hp: &HyperParams<S>,
) -> Result<CheckResult> {
    require_unguarded(hp, "movement bound")?;
    let mut r = CheckResult::empty();
    for (i, norm) in step_norms.iter().enumerate() {
        let t = i + 1;
        let bound = movement_bound(hp.eta_at(t), dim, hp.beta2);
        r.observe(t, (*norm / bound).as_f64(), 1.0 + BOUND_SLACK);
    }
    Ok(r)
}

/// Checks `|m_{t,j}|/√v_{t,j} ≤ 1/√(1−β₂)` over a sequence of `(m_t, v_t)`.
pub fn ratio_bound_check<'a, S: Scalar>(
    moments: impl IntoIterator<Item = (&'a Vector<S>, &'a Vector<S>)>,
    hp: &HyperParams<S>,
) -> Result<CheckResult> {
    require_unguarded(hp, "ratio bound")?;
    let cap = (S::one() - hp.beta2).sqrt();
    let mut r = CheckResult::empty();
    for (i, (m, v)) in moments.into_iter().enumerate() {
        m.expect_dim(v.dim())?;
        let worst = m
            .iter()
            .zip(v.iter())
            .map(|(m, v)| (div0(m.abs(), v.sqrt()) * cap).as_f64())
            .fold(0.0, f64::max);
        r.observe(i + 1, worst, 1.0 + BOUND_SLACK);
    }
    Ok(r)
}

/// Mergeable per-run tallies of the deterministic invariants.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub steps: u64,
    pub movement_violations: u64,
    pub ratio_violations: u64,
    pub decomposition_violations: u64,
    pub worst_movement_ratio: f64,
    pub worst_moment_ratio: f64,
    pub worst_decomposition_error: f64,
}

impl InvariantCounts {
    pub fn merge(&mut self, other: &InvariantCounts) {
        self.steps += other.steps;
        self.movement_violations += other.movement_violations;
        self.ratio_violations += other.ratio_violations;
        self.decomposition_violations += other.decomposition_violations;
        self.worst_movement_ratio = self.worst_movement_ratio.max(other.worst_movement_ratio);
        self.worst_moment_ratio = self.worst_moment_ratio.max(other.worst_moment_ratio);
        self.worst_decomposition_error = self
            .worst_decomposition_error
            .max(other.worst_decomposition_error);
    }

    pub fn total_violations(&self) -> u64 {
        self.movement_violations + self.ratio_violations + self.decomposition_violations
    }
}

/// Watches a run for movement, moment-ratio and STORM-split violations.
///
/// Movement and ratio are only checked for the coordinate-normalized methods with
/// `eps_guard = 0`; the split only for the STORM family from `t = 2` on.
pub struct InvariantMonitor<S> {
    method: Method,
    hp: HyperParams<S>,
    decomposition_tol: f64,
    counts: InvariantCounts,
}

impl<S: Scalar> InvariantMonitor<S> {
    pub fn new(method: Method, hp: &HyperParams<S>) -> Self {
        InvariantMonitor {
            method,
            hp: *hp,
            decomposition_tol: DECOMPOSITION_TOL.max(64.0 * S::epsilon().as_f64()),
            counts: InvariantCounts::default(),
        }
    }

    pub fn observe(&mut self, view: &StepView<'_, S>) {
        let c = &mut self.counts;
        c.steps += 1;
        if self.method.is_coordinate_normalized() && self.hp.eps_guard.is_zero() {
            let step = view
                .next_x
                .iter()
                .zip(view.x.iter())
                .fold(S::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b))
                .sqrt();
            let ratio = (step / movement_bound(view.eta, view.x.dim(), self.hp.beta2)).as_f64();
            c.worst_movement_ratio = c.worst_movement_ratio.max(ratio);
            if !(ratio <= 1.0 + BOUND_SLACK) {
                c.movement_violations += 1;
            }
            let cap = (S::one() - self.hp.beta2).sqrt();
            for (m, v) in view.m.iter().zip(view.v.iter()) {
                let r = (div0(m.abs(), v.sqrt()) * cap).as_f64();
                c.worst_moment_ratio = c.worst_moment_ratio.max(r);
                if !(r <= 1.0 + BOUND_SLACK) {
                    c.ratio_violations += 1;
                }
            }
        }
        if matches!(self.method, Method::SignStorm | Method::Storm | Method::L2NormalizedStorm)
            && view.t > 1
        {
            if let Ok((a, b)) = storm_decomposition(view.m_prev, view.grads, self.hp.beta1) {
                for j in 0..a.dim() {
                    let scale = S::one().max(a[j].abs() + b[j].abs());
                    let err = ((a[j] + b[j] - view.m[j]).abs() / scale).as_f64();
                    c.worst_decomposition_error = c.worst_decomposition_error.max(err);
                    if !(err <= self.decomposition_tol) {
                        c.decomposition_violations += 1;
                    }
                }
            }
        }
    }

    pub fn counts(&self) -> InvariantCounts {
        self.counts
    }
}

/// `ξ_t`, `ε_t`, `Z_t` of one STORM-family run, together with `∇F(x_t)`, `m_t`, `v_t`.
/// Index `i` holds iteration `t = i + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpsilonTrace<S> {
    pub xi: Vec<Vector<S>>,
    pub eps: Vec<Vector<S>>,
    pub z: Vec<Vector<S>>,
    pub grad: Vec<Vector<S>>,
    pub m: Vec<Vector<S>>,
    pub v: Vec<Vector<S>>,
}

impl<S: Scalar> EpsilonTrace<S> {
    pub fn with_capacity(n: usize) -> Self {
        EpsilonTrace {
            xi: Vec::with_capacity(n),
            eps: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            grad: Vec::with_capacity(n),
            m: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// `ε₀ = ξ₁`.
    pub fn eps0(&self) -> Option<&Vector<S>> {
        self.xi.first()
    }

    pub fn record(&mut self, view: &StepView<'_, S>) {
        let g = &view.grads;
        let f = view.grad_exact;
        self.xi.push(g.curr.zip_map(f, |a, b| a - b));
        self.eps.push(view.m.zip_map(f, |a, b| a - b));
        self.z.push(if view.t == 1 {
            Vector::zeros(f.dim())
        } else {
            Vector::from_fn(f.dim(), |j| {
                g.curr[j] - g.prev[j] + view.grad_exact_prev[j] - f[j]
            })
        });
        self.grad.push(f.clone());
        self.m.push(view.m.clone());
        self.v.push(view.v.clone());
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy)]
struct CompensatedSum<S> {
    sum: S,
    comp: S,
}

impl<S: Scalar> CompensatedSum<S> {
    fn new() -> Self {
        CompensatedSum {
            sum: S::zero(),
            comp: S::zero(),
        }
    }

    fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    fn value(&self) -> S {
        self.sum + self.comp
    }
}

/// Compares every recorded `ε_t` with the unrolled sum
/// `β₁ᵗε₀ + β₁Σ_{s≤t}β₁^{t−s}Z_s + (1−β₁)Σ_{s≤t}β₁^{t−s}ξ_s`, summed directly.
/// `worst` is `max|LHS − RHS| / (1 + max|ε|)`; pass iff it is at most `1e-6`.
pub fn representation_check<S: Scalar>(trace: &EpsilonTrace<S>, beta1: S) -> CheckResult {
    let mut r = CheckResult::empty();
    let Some(eps0) = trace.eps0() else {
        return r;
    };
    let d = eps0.dim();
    let scale = 1.0
        + trace
            .eps
            .iter()
            .map(|e| e.max_abs().as_f64())
            .fold(0.0, f64::max);
    let one_minus = S::one() - beta1;
    let mut beta_t = S::one();
    for (i, eps) in trace.eps.iter().enumerate() {
        let t = i + 1;
        beta_t = beta_t * beta1;
        let mut err = 0.0f64;
        for j in 0..d {
            let mut zs = CompensatedSum::new();
            let mut xis = CompensatedSum::new();
            let mut w = S::one();
            for s in (0..=i).rev() {
                zs.add(w * trace.z[s][j]);
                xis.add(w * trace.xi[s][j]);
                w = w * beta1;
            }
            let rhs = beta_t * eps0[j] + beta1 * zs.value() + one_minus * xis.value();
            err = err.max((eps[j] - rhs).abs().as_f64());
        }
        r.observe(t, err / scale / REPRESENTATION_TOL, 1.0);
    }
    r.worst *= REPRESENTATION_TOL;
    r
}

/// `β₁ᵗσ_j + 3(ηL_j/√(1−β₂) + (1−β₁)σ_j)(2ℓ + √(ℓ/(1−β₁)))` with `ℓ = max{1, log 1/δ}`
/// and `η` the largest step of the schedule.
pub fn epsilon_bound<S: Scalar>(
    hp: &HyperParams<S>,
    constants: &ProblemConstants<S>,
    confidence: S,
    t: usize,
    j: usize,
) -> S {
    let ell = log_confidence(confidence);
    let b1 = hp.beta1;
    let sigma = constants.sigma_vec[j];
    let drift = hp.step.max_eta() * constants.l_vec[j] / (S::one() - hp.beta2).sqrt();
    let noise = (S::one() - b1) * sigma;
    let mult = S::lit(2.0) * ell + (ell / (S::one() - b1)).sqrt();
    b1.powi(t.min(i32::MAX as usize) as i32) * sigma + S::lit(3.0) * (drift + noise) * mult
}

/// Violation tallies; merging is order-independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrequencyCounts {
    pub violations: u64,
    pub total: u64,
}

impl FrequencyCounts {
    pub fn merge(&mut self, other: &FrequencyCounts) {
        self.violations += other.violations;
        self.total += other.total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub violations: u64,
    pub total: u64,
    pub fraction: f64,
    /// Failure probability the bound is stated with.
    pub allowed: f64,
    /// `3√(p(1−p)/n)` at `p = allowed`.
    pub margin: f64,
    pub passed: bool,
}

impl FrequencyReport {
    pub fn from_counts(counts: FrequencyCounts, allowed: f64) -> Self {
        let n = counts.total.max(1) as f64;
        let p = allowed.clamp(0.0, 1.0);
        let margin = 3.0 * (p * (1.0 - p) / n).sqrt();
        let fraction = counts.violations as f64 / n;
        FrequencyReport {
            violations: counts.violations,
            total: counts.total,
            fraction,
            allowed,
            margin,
            passed: fraction <= allowed + margin,
        }
    }
}

/// Counts `(t, j)` pairs of one trace with `|ε_{t,j}|` above [`epsilon_bound`].
pub fn epsilon_bound_counts<S: Scalar>(
    trace: &EpsilonTrace<S>,
    hp: &HyperParams<S>,
    constants: &ProblemConstants<S>,
    confidence: S,
) -> Result<FrequencyCounts> {
    let mut c = FrequencyCounts::default();
    for (i, eps) in trace.eps.iter().enumerate() {
        eps.expect_dim(constants.sigma_vec.dim())?;
        for (j, e) in eps.iter().enumerate() {
            c.total += 1;
            if e.abs() > epsilon_bound(hp, constants, confidence, i + 1, j) {
                c.violations += 1;
            }
        }
    }
    Ok(c)
}

/// Fraction of `(seed, t, j)` triples violating the estimator error bound, against `6δ`.
pub fn epsilon_bound_frequency<S: Scalar>(
    traces: &[EpsilonTrace<S>],
    hp: &HyperParams<S>,
    constants: &ProblemConstants<S>,
    confidence: S,
) -> Result<FrequencyReport> {
    let mut total = FrequencyCounts::default();
    for tr in traces {
        total.merge(&epsilon_bound_counts(tr, hp, constants, confidence)?);
    }
    Ok(FrequencyReport::from_counts(total, 6.0 * confidence.as_f64()))
}

/// Counts `(t, j)` pairs where neither `c(ρ)|∂_jF| < B_{t,j}` nor
/// (`sgn ∂_jF = sgn m` and `|m|/√v ≥ (1−ρ)/(5√(1−β₂))`) holds.
pub fn sign_dichotomy_counts<S: Scalar>(
    trace: &EpsilonTrace<S>,
    hp: &HyperParams<S>,
    constants: &ProblemConstants<S>,
    confidence: S,
) -> Result<FrequencyCounts> {
    require_unguarded(hp, "sign dichotomy")?;
    let r = hp.checked_rho()?;
    let c = c_rho(r)?;
    let floor = (S::one() - r) / (S::lit(5.0) * (S::one() - hp.beta2).sqrt());
    let mut counts = FrequencyCounts::default();
    for (i, grad) in trace.grad.iter().enumerate() {
        let (m, v) = (&trace.m[i], &trace.v[i]);
        for j in 0..grad.dim() {
            counts.total += 1;
            let small = c * grad[j].abs() < epsilon_bound(hp, constants, confidence, i + 1, j);
            let agree = (grad[j] > S::zero() && m[j] > S::zero())
                || (grad[j] < S::zero() && m[j] < S::zero());
            let large = div0(m[j].abs(), v[j].sqrt()) >= floor;
            if !(small || (agree && large)) {
                counts.violations += 1;
            }
        }
    }
    Ok(counts)
}

/// Fraction of `(seed, t, j)` triples where neither dichotomy branch holds, against `6δ`.
pub fn sign_dichotomy_frequency<S: Scalar>(
    traces: &[EpsilonTrace<S>],
    hp: &HyperParams<S>,
    constants: &ProblemConstants<S>,
    confidence: S,
) -> Result<FrequencyReport> {
    let mut total = FrequencyCounts::default();
    for tr in traces {
        total.merge(&sign_dichotomy_counts(tr, hp, constants, confidence)?);
    }
    Ok(FrequencyReport::from_counts(total, 6.0 * confidence.as_f64()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdsKind {
    /// `±1` with equal probability: `R = 1`, `σ² = 1`.
    Rademacher,
    /// Uniform on `[−1, 1]`: `R = 1`, `σ² = 1/3`.
    BoundedUniform,
}

impl MdsKind {
    pub fn bound_r(self) -> f64 {
        1.0
    }

    pub fn variance(self) -> f64 {
        match self {
            MdsKind::Rademacher => 1.0,
            MdsKind::BoundedUniform => 1.0 / 3.0,
        }
    }

    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            MdsKind::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            MdsKind::BoundedUniform => rng.gen_range(-1.0..=1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTrial {
    pub r: f64,
    pub sigma_sq_seq: Vec<f64>,
    pub delta: f64,
    pub observed_max_partial_sum: f64,
}

impl ConcentrationTrial {
    pub fn new(r: f64, sigma_sq_seq: Vec<f64>, delta: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidConstant("R must be positive".into()));
        }
        if sigma_sq_seq.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidConstant("sigma_t^2 must be nonnegative".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::OutOfRange {
                name: "delta",
                value: delta,
                range: "(0, 1)",
            });
        }
        Ok(ConcentrationTrial {
            r,
            sigma_sq_seq,
            delta,
            observed_max_partial_sum: 0.0,
        })
    }

    /// Returns whether some prefix `|Σ_{s≤t} X_s|` exceeds
    /// `3Rℓ + 3√(ℓ Σ_{s≤t} σ_s²)`, and records the largest `|Σ_{s≤t} X_s|`.
    pub fn any_prefix_violates(&mut self, seq: &[f64]) -> bool {
        let ell = log_confidence(self.delta);
        let mut partial = 0.0;
        let mut var = 0.0;
        let mut violated = false;
        for (x, s2) in seq.iter().zip(&self.sigma_sq_seq) {
            partial += x;
            var += s2;
            self.observed_max_partial_sum = self.observed_max_partial_sum.max(partial.abs());
            if partial.abs() > 3.0 * self.r * ell + 3.0 * (var * ell).sqrt() {
                violated = true;
            }
        }
        violated
    }
}

/// Simulates `n_trials` sequences of length `horizon` and reports the fraction with
/// a violating prefix, against `3δ`.
pub fn lemma1_montecarlo(
    n_trials: usize,
    horizon: usize,
    delta: f64,
    kind: MdsKind,
    seed: u64,
) -> Result<FrequencyReport> {
    if n_trials < 100 {
        return Err(Error::PreconditionNotMet(format!(
            "lemma 1 Monte Carlo needs at least 100 trials, got {n_trials}"
        )));
    }
    let template = ConcentrationTrial::new(kind.bound_r(), vec![kind.variance(); horizon], delta)?;
    let base = mix64(seed);
    let violations = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(base ^ i));
            let seq: Vec<f64> = (0..horizon).map(|_| kind.draw(&mut rng)).collect();
            template.clone().any_prefix_violates(&seq) as u64
        })
        .sum();
    Ok(FrequencyReport::from_counts(
        FrequencyCounts {
            violations,
            total: n_trials as u64,
        },
        3.0 * delta,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckClass {
    Deterministic,
    Statistical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub checker: String,
    pub class: CheckClass,
    pub status: CheckStatus,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub verdicts: Vec<Verdict>,
}

impl SuiteReport {
    pub fn deterministic_failure(&self) -> bool {
        self.verdicts
            .iter()
            .any(|v| v.class == CheckClass::Deterministic && v.status == CheckStatus::Fail)
    }

    pub fn verdict(&self, checker: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.checker == checker)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSettings {
    pub horizon: usize,
    pub seeds: usize,
    pub confidence: f64,
    /// Seeds whose unrolled representation is summed directly (quadratic in T).
    pub representation_seeds: usize,
    pub lemma1_trials: usize,
    pub lemma1_horizon: usize,
    pub assumption_probes: usize,
    pub master_seed: u64,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            horizon: 1000,
            seeds: 200,
            confidence: 0.05,
            representation_seeds: 20,
            lemma1_trials: 10_000,
            lemma1_horizon: 1000,
            assumption_probes: 2000,
            master_seed: 0,
        }
    }
}

struct SeedOutcome {
    invariants: InvariantCounts,
    representation: Option<CheckResult>,
    eps: Result<FrequencyCounts>,
    dichotomy: Result<FrequencyCounts>,
    abort: Option<String>,
}

fn verdict(
    checker: &str,
    class: CheckClass,
    passed: bool,
    detail: impl Serialize,
) -> Verdict {
    Verdict {
        checker: checker.to_string(),
        class,
        status: if passed {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        detail: serde_json::to_value(detail).unwrap_or(serde_json::Value::Null),
    }
}

fn skipped(checker: &str, class: CheckClass, reason: String) -> Verdict {
    Verdict {
        checker: checker.to_string(),
        class,
        status: CheckStatus::Skipped,
        detail: serde_json::json!({ "reason": reason }),
    }
}

fn frequency_verdict(checker: &str, counts: Result<FrequencyCounts>, allowed: f64) -> Verdict {
    match counts {
        Ok(c) => {
            let rep = FrequencyReport::from_counts(c, allowed);
            verdict(checker, CheckClass::Statistical, rep.passed, rep)
        }
        Err(e) => skipped(checker, CheckClass::Statistical, e.to_string()),
    }
}

/// Runs Generalized SignSTORM with `hp` on `problem` for `settings.seeds` seeds and
/// evaluates every checker. Deterministic checkers fail on any violation;
/// statistical ones compare a violation frequency with the stated failure probability.
pub fn run_diagnostic_suite(
    problem: &dyn StochasticProblem<f64>,
    hp: &HyperParams<f64>,
    settings: &SuiteSettings,
    workers: usize,
) -> Result<SuiteReport> {
    hp.validate()?;
    if settings.horizon == 0 || settings.seeds == 0 {
        return Err(Error::InvalidExperiment(
            "diagnostics need at least one seed and one step".into(),
        ));
    }
    let delta = settings.confidence;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange {
            name: "confidence",
            value: delta,
            range: "(0, 1)",
        });
    }
    let constants = problem.constants();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;

    pool.install(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(settings.master_seed ^ 0xA55A));
        let assumptions = verify_assumptions(problem, settings.assumption_probes, &mut rng)?;

        let outcomes: Vec<SeedOutcome> = (0..settings.seeds)
            .into_par_iter()
            .map(|s| {
                let seed = mix64(mix64(settings.master_seed) ^ s as u64);
                let mut trace = EpsilonTrace::with_capacity(settings.horizon);
                let mut monitor = InvariantMonitor::new(Method::SignStorm, hp);
                let run = drive(problem, Method::SignStorm, hp, settings.horizon, seed, &mut |v| {
                    monitor.observe(v);
                    trace.record(v);
                });
                let representation =
                    (s < settings.representation_seeds).then(|| representation_check(&trace, hp.beta1));
                SeedOutcome {
                    invariants: monitor.counts(),
                    representation,
                    eps: epsilon_bound_counts(&trace, hp, constants, delta),
                    dichotomy: sign_dichotomy_counts(&trace, hp, constants, delta),
                    abort: run.err().map(|a| format!("t = {}: {}", a.t, a.reason)),
                }
            })
            .collect();

        let mut inv = InvariantCounts::default();
        let mut repr = CheckResult::empty();
        let mut eps = Ok(FrequencyCounts::default());
        let mut dich = Ok(FrequencyCounts::default());
        let mut aborts = Vec::new();
        for o in outcomes {
            inv.merge(&o.invariants);
            if let Some(r) = o.representation {
                repr.passed &= r.passed;
                repr.checked += r.checked;
                if r.worst >= repr.worst {
                    repr.worst = r.worst;
                    repr.worst_t = r.worst_t;
                }
            }
            merge_counts(&mut eps, o.eps);
            merge_counts(&mut dich, o.dichotomy);
            aborts.extend(o.abort);
        }

        let mut verdicts = vec![
            verdict(
                "assumptions",
                CheckClass::Deterministic,
                assumptions.all_passed(),
                &assumptions,
            ),
            verdict(
                "runs_completed",
                CheckClass::Deterministic,
                aborts.is_empty(),
                serde_json::json!({ "seeds": settings.seeds, "aborted": aborts }),
            ),
            verdict(
                "storm_decomposition",
                CheckClass::Deterministic,
                inv.decomposition_violations == 0,
                serde_json::json!({
                    "violations": inv.decomposition_violations,
                    "worst_relative_error": inv.worst_decomposition_error,
                    "tolerance": DECOMPOSITION_TOL,
                }),
            ),
            verdict("representation", CheckClass::Deterministic, repr.passed, repr),
        ];
        if hp.eps_guard == 0.0 {
            verdicts.push(verdict(
                "movement_bound",
                CheckClass::Deterministic,
                inv.movement_violations == 0,
                serde_json::json!({
                    "steps": inv.steps,
                    "violations": inv.movement_violations,
                    "worst_ratio": inv.worst_movement_ratio,
                }),
            ));
            verdicts.push(verdict(
                "moment_ratio_bound",
                CheckClass::Deterministic,
                inv.ratio_violations == 0,
                serde_json::json!({
                    "violations": inv.ratio_violations,
                    "worst_ratio": inv.worst_moment_ratio,
                }),
            ));
        } else {
            let reason = "eps_guard > 0".to_string();
            verdicts.push(skipped("movement_bound", CheckClass::Deterministic, reason.clone()));
            verdicts.push(skipped("moment_ratio_bound", CheckClass::Deterministic, reason));
        }
        verdicts.push(frequency_verdict("epsilon_bound_frequency", eps, 6.0 * delta));
        verdicts.push(frequency_verdict("sign_dichotomy_frequency", dich, 6.0 * delta));
        for (name, kind) in [
            ("lemma1_rademacher", MdsKind::Rademacher),
            ("lemma1_bounded_uniform", MdsKind::BoundedUniform),
        ] {
            let rep = lemma1_montecarlo(
                settings.lemma1_trials,
                settings.lemma1_horizon,
                delta,
                kind,
                mix64(settings.master_seed ^ kind as u64),
            );
            verdicts.push(match rep {
                Ok(r) => verdict(name, CheckClass::Statistical, r.passed, r),
                Err(e) => skipped(name, CheckClass::Statistical, e.to_string()),
            });
        }
        Ok(SuiteReport { verdicts })
    })
}

fn merge_counts(acc: &mut Result<FrequencyCounts>, next: Result<FrequencyCounts>) {
    match (acc.as_mut(), next) {
        (Ok(a), Ok(n)) => a.merge(&n),
        (Ok(_), Err(e)) => *acc = Err(e),
        (Err(_), _) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run_epsilon_trace;
    use crate::optim::GradientPair;
    use crate::problems::{noisy_quadratic, NoisePayload, NoiseRealization};

    fn v(xs: &[f64]) -> Vector<f64> {
        Vector::from(xs.to_vec())
    }

    fn quad(d: usize, h: f64, sigma: f64) -> crate::problems::NoisyQuadratic<f64> {
        noisy_quadratic(
            Vector::filled(d, h),
            Vector::filled(d, sigma),
            Vector::from_fn(d, |j| 1.0 + j as f64 * 0.25),
        )
        .unwrap()
    }

    #[test]
    fn movement_bound_hand_value() {
        let hp = HyperParams::new(0.1, 0.5, 0.0).unwrap();
        assert!((movement_bound(0.1, 4, 0.0) - 0.2f64).abs() < 1e-15);
        let r = movement_bound_check(&[0.2, 0.1, 0.0], 4, &hp).unwrap();
        assert!(r.passed);
        assert!((r.worst - 1.0).abs() < 1e-12);
        assert_eq!(r.worst_t, Some(1));
        let r = movement_bound_check(&[0.2 * (1.0 + 1e-6)], 4, &hp).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn guarded_runs_are_refused() {
        let hp = HyperParams::new(0.1, 0.5, 0.0).unwrap().with_eps_guard(1e-8).unwrap();
        assert!(matches!(
            movement_bound_check(&[0.1], 2, &hp),
            Err(Error::PreconditionNotMet(_))
        ));
        let (m, vv) = (v(&[1.0]), v(&[1.0]));
        assert!(ratio_bound_check([(&m, &vv)], &hp).is_err());
    }

    #[test]
    fn ratio_bound_is_tight_on_first_step() {
        // v₁ = (1−β₂)m₁², so |m₁|/√v₁ = 1/√(1−β₂) exactly.
        let hp = HyperParams::new(0.1, 0.9, 0.81).unwrap();
        let m = v(&[3.0, -0.5, 0.0]);
        let vv = m.map(|x| 0.19 * x * x);
        let r = ratio_bound_check([(&m, &vv)], &hp).unwrap();
        assert!(r.passed);
        assert!((r.worst - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monitored_random_run_respects_deterministic_bounds() {
        let p = quad(5, 1.0, 0.5);
        let hp = HyperParams::new(0.01, 0.9, 0.81).unwrap();
        let mut mon = InvariantMonitor::new(Method::SignStorm, &hp);
        drive(&p, Method::SignStorm, &hp, 10_000, 3, &mut |s| mon.observe(s)).unwrap();
        let c = mon.counts();
        assert_eq!(c.steps, 10_000);
        assert_eq!(c.total_violations(), 0);
        assert!(c.worst_movement_ratio <= 1.0 + BOUND_SLACK);
        assert!(c.worst_decomposition_error <= DECOMPOSITION_TOL);
    }

    #[test]
    fn sign_steps_saturate_the_movement_bound() {
        let p = quad(4, 1.0, 0.5);
        let hp = HyperParams::new(0.1, 0.5, 0.0).unwrap();
        let mut mon = InvariantMonitor::new(Method::SignStorm, &hp);
        drive(&p, Method::SignStorm, &hp, 5, 1, &mut |s| mon.observe(s)).unwrap();
        assert!((mon.counts().worst_movement_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn representation_collapses_without_momentum() {
        let p = quad(3, 1.0, 0.5);
        let hp = HyperParams::new(0.01, 0.0, 0.0).unwrap();
        let tr = run_epsilon_trace(&p, Method::SignStorm, &hp, 50, 2).unwrap();
        for (e, x) in tr.eps.iter().zip(&tr.xi) {
            assert_eq!(e, x);
        }
        assert!(representation_check(&tr, 0.0).passed);
        assert!(tr.z[0].iter().all(|z| *z == 0.0));
    }

    fn scripted_step(
        t: usize,
        trace: &mut EpsilonTrace<f64>,
        m_prev: &Vector<f64>,
        m: &Vector<f64>,
        grads: &GradientPair<f64>,
        f: &Vector<f64>,
        f_prev: &Vector<f64>,
    ) {
        let x = v(&[0.0]);
        let vv = v(&[1.0]);
        trace.record(&StepView {
            t,
            eta: 0.1,
            x: &x,
            next_x: &x,
            m_prev,
            m,
            v: &vv,
            update: &x,
            grads,
            grad_exact: f,
            grad_exact_prev: f_prev,
        });
    }

    #[test]
    fn representation_three_step_hand_expansion() {
        // d = 1, β₁ = 1/2. Exact gradients F'_t = 1, 2, 4; samples
        // g_t = (1.5, 1.0, 5.0) and g'_t = (_, 0.5, 2.5).
        let b = 0.5;
        let f = [1.0, 2.0, 4.0];
        let g = [1.5, 1.0, 5.0];
        let gp = [0.0, 0.5, 2.5];
        let mut trace = EpsilonTrace::with_capacity(3);
        let mut m_prev = v(&[0.0]);
        for t in 0..3 {
            let m = if t == 0 {
                g[0]
            } else {
                b * (m_prev[0] - gp[t]) + g[t]
            };
            let pair = GradientPair::new(v(&[g[t]]), v(&[gp[t]]));
            let fp = v(&[f[t.saturating_sub(1)]]);
            scripted_step(t + 1, &mut trace, &m_prev, &v(&[m]), &pair, &v(&[f[t]]), &fp);
            m_prev = v(&[m]);
        }
        // m = 1.5, 1.5, 4.5 → ε = 0.5, −0.5, 0.5.
        let eps: Vec<f64> = trace.eps.iter().map(|e| e[0]).collect();
        assert_eq!(eps, vec![0.5, -0.5, 0.5]);
        // ξ = 0.5, −1, 1; Z = 0, (1 − 0.5) + 1 − 2 = −0.5, (5 − 2.5) + 2 − 4 = 0.5.
        let z: Vec<f64> = trace.z.iter().map(|e| e[0]).collect();
        assert_eq!(z, vec![0.0, -0.5, 0.5]);
        // t = 3: b³·0.5 + b(b²·0 + b·(−0.5) + 0.5) + (1−b)(b²·0.5 + b·(−1) + 1)
        //      = 0.0625 + 0.125 + 0.3125.
        let hand3 = b.powi(3) * 0.5
            + b * (b * b * 0.0 + b * -0.5 + 0.5)
            + (1.0 - b) * (b * b * 0.5 - b + 1.0);
        assert!((hand3 - eps[2]).abs() < 1e-12);
        let r = representation_check(&trace, b);
        assert!(r.passed);
        assert!(r.worst < 1e-12);
    }

    #[test]
    fn representation_holds_on_long_heavy_momentum_run() {
        let p = quad(4, 1.0, 0.5);
        let hp = HyperParams::new(0.001, 0.99, 0.0).unwrap();
        let tr = run_epsilon_trace(&p, Method::SignStorm, &hp, 1000, 9).unwrap();
        let r = representation_check(&tr, 0.99);
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 1000);
    }

    #[test]
    fn representation_detects_tampering() {
        let p = quad(2, 1.0, 0.5);
        let hp = HyperParams::new(0.01, 0.9, 0.0).unwrap();
        let mut tr = run_epsilon_trace(&p, Method::SignStorm, &hp, 20, 1).unwrap();
        tr.eps[10][1] += 1e-3;
        assert!(!representation_check(&tr, 0.9).passed);
    }

    #[test]
    fn epsilon_bound_first_term_dominates_at_t1() {
        let p = quad(3, 1.0, 0.5);
        let hp = HyperParams::new(1e-6, 0.999_999, 0.0).unwrap();
        assert!(epsilon_bound(&hp, p.constants(), 0.05, 1, 0) >= 0.5);
    }

    #[test]
    fn noiseless_zero_momentum_has_no_violations() {
        let p = quad(3, 1.0, 0.0);
        let hp = HyperParams::new(0.01, 0.0, 0.0).unwrap();
        let tr = run_epsilon_trace(&p, Method::SignStorm, &hp, 200, 1).unwrap();
        let e = epsilon_bound_frequency(std::slice::from_ref(&tr), &hp, p.constants(), 0.05).unwrap();
        assert_eq!(e.violations, 0);
        assert_eq!(e.total, 600);
        // β₁ = 0 makes ρ infinite unless β₂ = 0, where 0/0 = 0.
        let d = sign_dichotomy_frequency(&[tr], &hp, p.constants(), 0.05).unwrap();
        assert_eq!(d.violations, 0);
    }

    #[test]
    fn near_stationary_point_takes_threshold_branch() {
        let p = noisy_quadratic(v(&[1.0, 1.0]), v(&[0.5, 0.5]), v(&[1e-9, -1e-9])).unwrap();
        let hp = HyperParams::new(0.001, 0.9, 0.0).unwrap();
        let tr = run_epsilon_trace(&p, Method::SignStorm, &hp, 1, 4).unwrap();
        let c = sign_dichotomy_counts(&tr, &hp, p.constants(), 0.05).unwrap();
        assert_eq!(c.violations, 0);
    }

    #[test]
    fn frequency_margin() {
        let r = FrequencyReport::from_counts(FrequencyCounts { violations: 40, total: 200 }, 0.15);
        let margin = 3.0 * (0.15f64 * 0.85 / 200.0).sqrt();
        assert_eq!(r.margin, margin);
        assert!(r.passed == (0.2 <= 0.15 + margin));
        let r = FrequencyReport::from_counts(FrequencyCounts { violations: 1, total: 10 }, 0.6);
        assert!(r.passed);
    }

    #[test]
    fn zero_sequence_never_violates() {
        let mut trial = ConcentrationTrial::new(1.0, vec![1.0; 100], 0.05).unwrap();
        assert!(!trial.any_prefix_violates(&[0.0; 100]));
        assert_eq!(trial.observed_max_partial_sum, 0.0);
    }

    #[test]
    fn lemma1_prefix_threshold_uses_clamped_log() {
        // δ = 0.5 > 1/e, so ℓ = 1 and the first prefix threshold is 3 + 3 = 6.
        let mut trial = ConcentrationTrial::new(1.0, vec![1.0], 0.5).unwrap();
        assert!(!trial.any_prefix_violates(&[6.0]));
        let mut trial = ConcentrationTrial::new(1.0, vec![1.0], 0.5).unwrap();
        assert!(trial.any_prefix_violates(&[6.0 + 1e-9]));
    }

    #[test]
    fn lemma1_rademacher_stays_under_budget() {
        let r = lemma1_montecarlo(2000, 1000, 0.05, MdsKind::Rademacher, 11).unwrap();
        assert!(r.passed);
        assert!(r.fraction <= 0.15);
        assert!(lemma1_montecarlo(99, 10, 0.05, MdsKind::Rademacher, 1).is_err());
    }

    #[test]
    fn lemma1_is_seed_deterministic() {
        let a = lemma1_montecarlo(500, 100, 0.5, MdsKind::BoundedUniform, 3).unwrap();
        let b = lemma1_montecarlo(500, 100, 0.5, MdsKind::BoundedUniform, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn suite_skips_guarded_checks() {
        let p = quad(3, 1.0, 0.5);
        let hp = HyperParams::new(0.01, 0.9, 0.0).unwrap().with_eps_guard(1e-8).unwrap();
        let settings = SuiteSettings {
            horizon: 100,
            seeds: 4,
            representation_seeds: 2,
            lemma1_trials: 100,
            lemma1_horizon: 50,
            assumption_probes: 50,
            ..SuiteSettings::default()
        };
        let rep = run_diagnostic_suite(&p, &hp, &settings, 2).unwrap();
        assert_eq!(rep.verdict("movement_bound").unwrap().status, CheckStatus::Skipped);
        assert_eq!(rep.verdict("sign_dichotomy_frequency").unwrap().status, CheckStatus::Skipped);
        assert!(!rep.deterministic_failure());
    }

    #[test]
    fn scripted_noise_payload_is_shared() {
        // The STORM pair must be evaluated on one realization.
        let p = quad(2, 1.0, 0.5);
        let xi = NoiseRealization { sample_id: 0, payload: NoisePayload::Additive(v(&[0.3, -0.2])) };
        let a = p.stoch_grad(&v(&[1.0, 1.0]), &xi).unwrap();
        let b = p.stoch_grad(&v(&[0.0, 0.0]), &xi).unwrap();
        let z = a.zip_map(&b, |x, y| x - y);
        assert_eq!(z, v(&[1.0, 1.0]));
    }
}
