//! Synthetic stochastic objectives with exactly known constants.
//!
//! Each problem declares `Δ`, the per-coordinate smoothness vector `L`
//! (with the `L_j/√d` convention, so `|∂_j f(x,Ξ) − ∂_j f(y,Ξ)| ≤ (L_j/√d)‖x−y‖₂`)
//! and the per-coordinate noise bound `σ`. [`verify_assumptions`] probes
//! those declarations empirically.
//!
//! # Logistic constants
//!
//! For `f(x, i) = log(1 + exp(−y_i⟨w_i, x⟩))` with `s = sigmoid(−y_i⟨w_i,x⟩) ∈ (0, 1)`:
//!
//! * `∂_j f(x, i) = −y_i w_{ij} s`, so `|∂_j f| ≤ b_j := max_i |w_{ij}|` and the
//!   deviation from the full-data mean is at most `σ_j = 2 b_j`.
//! * The Hessian of one summand is `s(1−s) w_i w_iᵀ` with `s(1−s) ≤ 1/4`, hence
//!   `|∂_j f(x,i) − ∂_j f(y,i)| ≤ ¼ |w_{ij}| ‖w_i‖₂ ‖x − y‖₂` and
//!   `L_j = √d · ¼ · max_i |w_{ij}| ‖w_i‖₂`.
//! * `F > 0` everywhere, so `Δ = F(x₁)` is an upper bound on `F(x₁) − F(x*)`.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{div0, Scalar};
use crate::vector::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants<S> {
    /// Upper bound on `F(x₁) − F(x*)`.
    pub delta_upper: S,
    pub l_vec: Vector<S>,
    pub sigma_vec: Vector<S>,
    pub x_init: Vector<S>,
    pub x_star: Option<Vector<S>>,
}

impl<S: Scalar> ProblemConstants<S> {
    pub fn l1_norm(&self) -> S {
        self.l_vec.l1()
    }

    pub fn sigma_l1(&self) -> S {
        self.sigma_vec.l1()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.x_init.dim();
        if d == 0 {
            return Err(Error::InvalidConstant("dimension must be at least 1".into()));
        }
        self.l_vec.expect_dim(d)?;
        self.sigma_vec.expect_dim(d)?;
        if let Some(xs) = &self.x_star {
            xs.expect_dim(d)?;
        }
        if let Some(j) = self.l_vec.iter().position(|l| !(*l > S::zero() && l.is_finite())) {
            return Err(Error::InvalidConstant(format!("L_{j} must be positive")));
        }
        if let Some(j) = self.sigma_vec.iter().position(|s| !(*s >= S::zero() && s.is_finite())) {
            return Err(Error::InvalidConstant(format!("sigma_{j} must be nonnegative")));
        }
        if !(self.delta_upper >= S::zero() && self.delta_upper.is_finite()) {
            return Err(Error::InvalidConstant("delta must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoisePayload<S> {
    /// Per-coordinate additive noise draw.
    Additive(Vector<S>),
    /// Data index of a finite-sum problem.
    Index(usize),
}

/// One draw of `Ξ`. Evaluating the stochastic gradient at two points with the
/// same realization uses the same sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization<S> {
    pub sample_id: u64,
    pub payload: NoisePayload<S>,
}

pub trait StochasticProblem<S: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn constants(&self) -> &ProblemConstants<S>;

    fn draw_noise(&self, rng: &mut dyn RngCore) -> NoiseRealization<S>;

    fn stoch_grad(&self, x: &Vector<S>, xi: &NoiseRealization<S>) -> Result<Vector<S>>;

    fn exact_grad(&self, x: &Vector<S>) -> Result<Vector<S>>;

    fn value(&self, x: &Vector<S>) -> Result<S>;

    /// Full support of `Ξ` when it is finite and small enough to enumerate.
    fn noise_support(&self) -> Option<Vec<NoiseRealization<S>>> {
        None
    }
}

pub type SharedProblem<S> = Arc<dyn StochasticProblem<S>>;

fn positive<S: Scalar>(v: &Vector<S>, what: &str) -> Result<()> {
    match v.iter().position(|h| !(*h > S::zero() && h.is_finite())) {
        None => Ok(()),
        Some(j) => Err(Error::InvalidConstant(format!("{what}_{j} must be positive"))),
    }
}

fn nonnegative<S: Scalar>(v: &Vector<S>, what: &str) -> Result<()> {
    match v.iter().position(|h| !(*h >= S::zero() && h.is_finite())) {
        None => Ok(()),
        Some(j) => Err(Error::InvalidConstant(format!("{what}_{j} must be nonnegative"))),
    }
}

fn uniform_noise<S: Scalar>(sigma: &Vector<S>, rng: &mut dyn RngCore) -> NoiseRealization<S> {
    let sample_id = rng.next_u64();
    let payload = Vector::from_fn(sigma.dim(), |j| {
        let u: f64 = rng.gen_range(-1.0..=1.0);
        sigma[j] * S::lit(u)
    });
    NoiseRealization {
        sample_id,
        payload: NoisePayload::Additive(payload),
    }
}

fn additive<S: Scalar>(xi: &NoiseRealization<S>, d: usize) -> Result<&Vector<S>> {
    match &xi.payload {
        NoisePayload::Additive(n) => {
            n.expect_dim(d)?;
            Ok(n)
        }
        NoisePayload::Index(_) => Err(Error::InvalidConstant(
            "additive-noise problem received an index sample".into(),
        )),
    }
}

/// `F(x) = ½ Σ h_j x_j²` with additive noise uniform on `[−σ_j, σ_j]`.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic<S> {
    hessian_diag: Vector<S>,
    constants: ProblemConstants<S>,
}

pub fn noisy_quadratic<S: Scalar>(
    hessian_diag: Vector<S>,
    sigma_vec: Vector<S>,
    x_init: Vector<S>,
) -> Result<NoisyQuadratic<S>> {
    let d = x_init.dim();
    hessian_diag.expect_dim(d)?;
    sigma_vec.expect_dim(d)?;
    positive(&hessian_diag, "h")?;
    nonnegative(&sigma_vec, "sigma")?;
    let sqrt_d = S::from_usize_exact(d).sqrt();
    let delta = quadratic_value(&hessian_diag, &x_init);
    let constants = ProblemConstants {
        delta_upper: delta,
        l_vec: hessian_diag.map(|h| *h * sqrt_d),
        sigma_vec,
        x_star: Some(Vector::zeros(d)),
        x_init,
    };
    constants.validate()?;
    Ok(NoisyQuadratic {
        hessian_diag,
        constants,
    })
}

fn quadratic_value<S: Scalar>(h: &Vector<S>, x: &Vector<S>) -> S {
    let half = S::lit(0.5);
    h.iter()
        .zip(x.iter())
        .fold(S::zero(), |acc, (h, x)| acc + half * *h * *x * *x)
}

impl<S: Scalar> StochasticProblem<S> for NoisyQuadratic<S> {
    fn name(&self) -> &str {
        "noisy_quadratic"
    }

    fn dim(&self) -> usize {
        self.hessian_diag.dim()
    }

    fn constants(&self) -> &ProblemConstants<S> {
        &self.constants
    }

    fn draw_noise(&self, rng: &mut dyn RngCore) -> NoiseRealization<S> {
        uniform_noise(&self.constants.sigma_vec, rng)
    }

    fn stoch_grad(&self, x: &Vector<S>, xi: &NoiseRealization<S>) -> Result<Vector<S>> {
        let noise = additive(xi, self.dim())?;
        Ok(self.exact_grad(x)?.zip_map(noise, |g, n| g + n))
    }

    fn exact_grad(&self, x: &Vector<S>) -> Result<Vector<S>> {
        x.expect_dim(self.dim())?;
        Ok(self.hessian_diag.zip_map(x, |h, x| h * x))
    }

    fn value(&self, x: &Vector<S>) -> Result<S> {
        x.expect_dim(self.dim())?;
        Ok(quadratic_value(&self.hessian_diag, x))
    }
}

/// Smallest `c` with `|h''(u)| ≤ c` for `h(u) = u²/(1+u²)`; attained at `u = 0`.
pub const BOUNDED_NONCONVEX_CURVATURE: f64 = 2.0;

/// `F(x) = Σ a_j x_j²/(1+x_j²)`, non-convex for `|x_j| > 1/√3`, with additive
/// noise uniform on `[−σ_j, σ_j]`.
#[derive(Debug, Clone)]
pub struct BoundedNonconvex<S> {
    weights: Vector<S>,
    constants: ProblemConstants<S>,
}

pub fn bounded_nonconvex<S: Scalar>(
    a_vec: Vector<S>,
    sigma_vec: Vector<S>,
    x_init: Vector<S>,
) -> Result<BoundedNonconvex<S>> {
    let d = x_init.dim();
    a_vec.expect_dim(d)?;
    sigma_vec.expect_dim(d)?;
    positive(&a_vec, "a")?;
    nonnegative(&sigma_vec, "sigma")?;
    let scale = S::lit(BOUNDED_NONCONVEX_CURVATURE) * S::from_usize_exact(d).sqrt();
    let delta = nonconvex_value(&a_vec, &x_init);
    let constants = ProblemConstants {
        delta_upper: delta,
        l_vec: a_vec.map(|a| *a * scale),
        sigma_vec,
        x_star: Some(Vector::zeros(d)),
        x_init,
    };
    constants.validate()?;
    Ok(BoundedNonconvex {
        weights: a_vec,
        constants,
    })
}

fn nonconvex_value<S: Scalar>(a: &Vector<S>, x: &Vector<S>) -> S {
    a.iter().zip(x.iter()).fold(S::zero(), |acc, (a, x)| {
        let sq = *x * *x;
        acc + *a * sq / (S::one() + sq)
    })
}

impl<S: Scalar> StochasticProblem<S> for BoundedNonconvex<S> {
    fn name(&self) -> &str {
        "bounded_nonconvex"
    }

    fn dim(&self) -> usize {
        self.weights.dim()
    }

    fn constants(&self) -> &ProblemConstants<S> {
        &self.constants
    }

    fn draw_noise(&self, rng: &mut dyn RngCore) -> NoiseRealization<S> {
        uniform_noise(&self.constants.sigma_vec, rng)
    }

    fn stoch_grad(&self, x: &Vector<S>, xi: &NoiseRealization<S>) -> Result<Vector<S>> {
        let noise = additive(xi, self.dim())?;
        Ok(self.exact_grad(x)?.zip_map(noise, |g, n| g + n))
    }

    fn exact_grad(&self, x: &Vector<S>) -> Result<Vector<S>> {
        x.expect_dim(self.dim())?;
        let two = S::lit(2.0);
        Ok(self.weights.zip_map(x, |a, x| {
            let den = S::one() + x * x;
            a * two * x / (den * den)
        }))
    }

    fn value(&self, x: &Vector<S>) -> Result<S> {
        x.expect_dim(self.dim())?;
        Ok(nonconvex_value(&self.weights, x))
    }
}

/// Finite-sum logistic regression; `Ξ` is a uniformly drawn data index.
#[derive(Debug, Clone)]
pub struct SyntheticLogistic<S> {
    features: Vec<Vector<S>>,
    labels: Vec<S>,
    constants: ProblemConstants<S>,
}

/// Draws `n_samples` features uniform on `[−feature_bound, feature_bound]^d` and
/// `±1` labels from `data_seed`.
pub fn synthetic_logistic<S: Scalar>(
    n_samples: usize,
    feature_bound: S,
    x_init: Vector<S>,
    data_seed: u64,
) -> Result<SyntheticLogistic<S>> {
    let d = x_init.dim();
    if n_samples == 0 {
        return Err(Error::InvalidConstant("n_samples must be at least 1".into()));
    }
    if !(feature_bound > S::zero() && feature_bound.is_finite()) {
        return Err(Error::InvalidConstant("feature_bound must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let bound = feature_bound.as_f64();
    let mut features = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        features.push(Vector::from_fn(d, |_| S::lit(rng.gen_range(-bound..=bound))));
        labels.push(if rng.gen_bool(0.5) { S::one() } else { -S::one() });
    }
    logistic_from_data(features, labels, x_init)
}

/// Logistic problem over caller-supplied data (features bounded, labels `±1`).
pub fn logistic_from_data<S: Scalar>(
    features: Vec<Vector<S>>,
    labels: Vec<S>,
    x_init: Vector<S>,
) -> Result<SyntheticLogistic<S>> {
    let d = x_init.dim();
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::InvalidConstant(
            "need one label per sample and at least one sample".into(),
        ));
    }
    for w in &features {
        w.expect_dim(d)?;
    }
    let col_max = Vector::from_fn(d, |j| {
        features.iter().fold(S::zero(), |acc, w| acc.max(w[j].abs()))
    });
    let sqrt_d = S::from_usize_exact(d).sqrt();
    let quarter = S::lit(0.25);
    let l_vec = Vector::from_fn(d, |j| {
        let worst = features
            .iter()
            .fold(S::zero(), |acc, w| acc.max(w[j].abs() * w.l2()));
        sqrt_d * quarter * worst
    });
    if l_vec.iter().any(|l| !(*l > S::zero())) {
        return Err(Error::InvalidConstant(
            "every feature column needs a nonzero entry".into(),
        ));
    }
    let mut p = SyntheticLogistic {
        features,
        labels,
        constants: ProblemConstants {
            delta_upper: S::zero(),
            l_vec,
            sigma_vec: col_max.map(|b| S::lit(2.0) * *b),
            x_init: x_init.clone(),
            x_star: None,
        },
    };
    p.constants.delta_upper = p.value(&x_init)?;
    p.constants.validate()?;
    Ok(p)
}

/// `log(1 + e^z)` without overflow.
fn softplus<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

impl<S: Scalar> SyntheticLogistic<S> {
    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    fn margin(&self, x: &Vector<S>, i: usize) -> S {
        let w = &self.features[i];
        self.labels[i] * w.iter().zip(x.iter()).fold(S::zero(), |acc, (a, b)| acc + *a * *b)
    }

    fn sample_grad(&self, x: &Vector<S>, i: usize) -> Vector<S> {
        let s = sigmoid(-self.margin(x, i));
        let coef = -self.labels[i] * s;
        self.features[i].map(|w| coef * *w)
    }
}

impl<S: Scalar> StochasticProblem<S> for SyntheticLogistic<S> {
    fn name(&self) -> &str {
        "synthetic_logistic"
    }

    fn dim(&self) -> usize {
        self.constants.x_init.dim()
    }

    fn constants(&self) -> &ProblemConstants<S> {
        &self.constants
    }

    fn draw_noise(&self, rng: &mut dyn RngCore) -> NoiseRealization<S> {
        let sample_id = rng.next_u64();
        NoiseRealization {
            sample_id,
            payload: NoisePayload::Index(rng.gen_range(0..self.n_samples())),
        }
    }

    fn stoch_grad(&self, x: &Vector<S>, xi: &NoiseRealization<S>) -> Result<Vector<S>> {
        x.expect_dim(self.dim())?;
        match xi.payload {
            NoisePayload::Index(i) if i < self.n_samples() => Ok(self.sample_grad(x, i)),
            NoisePayload::Index(i) => Err(Error::InvalidConstant(format!(
                "sample index {i} out of range"
            ))),
            NoisePayload::Additive(_) => Err(Error::InvalidConstant(
                "finite-sum problem received an additive sample".into(),
            )),
        }
    }

    fn exact_grad(&self, x: &Vector<S>) -> Result<Vector<S>> {
        x.expect_dim(self.dim())?;
        let mut acc = Vector::zeros(self.dim());
        for i in 0..self.n_samples() {
            let g = self.sample_grad(x, i);
            for j in 0..self.dim() {
                acc[j] = acc[j] + g[j];
            }
        }
        let n = S::from_usize_exact(self.n_samples());
        Ok(acc.map(|v| *v / n))
    }

    fn value(&self, x: &Vector<S>) -> Result<S> {
        x.expect_dim(self.dim())?;
        let total = (0..self.n_samples()).fold(S::zero(), |acc, i| acc + softplus(-self.margin(x, i)));
        Ok(total / S::from_usize_exact(self.n_samples()))
    }

    fn noise_support(&self) -> Option<Vec<NoiseRealization<S>>> {
        Some(
            (0..self.n_samples())
                .map(|i| NoiseRealization {
                    sample_id: i as u64,
                    payload: NoisePayload::Index(i),
                })
                .collect(),
        )
    }
}

/// A problem whose declared constants replace the inner problem's. Used to
/// inject deliberately wrong declarations.
pub struct Redeclared<S: Scalar> {
    inner: SharedProblem<S>,
    constants: ProblemConstants<S>,
}

pub fn redeclare<S: Scalar>(
    inner: SharedProblem<S>,
    constants: ProblemConstants<S>,
) -> Result<Redeclared<S>> {
    constants.validate()?;
    constants.x_init.expect_dim(inner.dim())?;
    Ok(Redeclared { inner, constants })
}

/// Same problem with every `L_j` multiplied by `factor`.
pub fn scale_declared_smoothness<S: Scalar>(
    inner: SharedProblem<S>,
    factor: S,
) -> Result<Redeclared<S>> {
    let mut c = inner.constants().clone();
    c.l_vec = c.l_vec.map(|l| *l * factor);
    redeclare(inner, c)
}

impl<S: Scalar> StochasticProblem<S> for Redeclared<S> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn constants(&self) -> &ProblemConstants<S> {
        &self.constants
    }
    fn draw_noise(&self, rng: &mut dyn RngCore) -> NoiseRealization<S> {
        self.inner.draw_noise(rng)
    }
    fn stoch_grad(&self, x: &Vector<S>, xi: &NoiseRealization<S>) -> Result<Vector<S>> {
        self.inner.stoch_grad(x, xi)
    }
    fn exact_grad(&self, x: &Vector<S>) -> Result<Vector<S>> {
        self.inner.exact_grad(x)
    }
    fn value(&self, x: &Vector<S>) -> Result<S> {
        self.inner.value(x)
    }
    fn noise_support(&self) -> Option<Vec<NoiseRealization<S>>> {
        self.inner.noise_support()
    }
}

/// Relative slack for the almost-sure inequalities, absorbing rounding only.
pub const ASSUMPTION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    /// Largest observed ratio of measured quantity to its allowance (pass iff ≤ 1).
    pub worst_ratio: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub unbiasedness: AssumptionCheck,
    pub bounded_noise: AssumptionCheck,
    pub smoothness: AssumptionCheck,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.unbiasedness.passed && self.bounded_noise.passed && self.smoothness.passed
    }
}

fn probe_point<S: Scalar>(x_init: &Vector<S>, rng: &mut dyn RngCore) -> Vector<S> {
    let scale = [0.1, 1.0, 3.0][rng.gen_range(0..3)];
    x_init.map(|x0| {
        let u: f64 = rng.gen_range(-1.0..=1.0);
        *x0 + S::lit(scale * (1.0 + x0.abs().as_f64()) * u)
    })
}

/// Probes unbiasedness, bounded noise and per-coordinate smoothness against the
/// declared constants.
///
/// * Unbiasedness: exhaustive over the support for finite-sum problems
///   (tolerance `1e-12·(1 + max|∇F|)`), otherwise a Monte Carlo mean over
///   `n_probes` draws compared with `5σ_j/√n`.
/// * Bounded noise: `max_j |∇_j f − ∂_j F| / σ_j` with `0/0 = 0`.
/// * Smoothness: `max |Δ∂_j f|·√d / (L_j‖x−y‖₂)`; half of the probes move along a
///   single axis, where the bound can be tight.
pub fn verify_assumptions<S: Scalar>(
    p: &dyn StochasticProblem<S>,
    n_probes: usize,
    rng: &mut dyn RngCore,
) -> Result<AssumptionReport> {
    let n_probes = n_probes.max(1);
    let c = p.constants();
    let d = p.dim();
    let sqrt_d = (d as f64).sqrt();
    let limit = 1.0 + ASSUMPTION_SLACK;

    let unbiasedness = if let Some(support) = p.noise_support() {
        let mut worst = 0.0f64;
        let probes = n_probes.min(100);
        for _ in 0..probes {
            let x = probe_point(&c.x_init, rng);
            let exact = p.exact_grad(&x)?.to_f64();
            let mut mean = vec![0.0f64; d];
            for xi in &support {
                let g = p.stoch_grad(&x, xi)?;
                for j in 0..d {
                    mean[j] += g[j].as_f64();
                }
            }
            let tol = 1e-12 * (1.0 + exact.max_abs());
            for j in 0..d {
                let gap = (mean[j] / support.len() as f64 - exact[j]).abs();
                worst = worst.max(gap / tol);
            }
        }
        AssumptionCheck {
            passed: worst <= 1.0,
            worst_ratio: worst,
            probes,
        }
    } else {
        let x = probe_point(&c.x_init, rng);
        let exact = p.exact_grad(&x)?.to_f64();
        let mut mean = vec![0.0f64; d];
        for _ in 0..n_probes {
            let xi = p.draw_noise(rng);
            let g = p.stoch_grad(&x, &xi)?;
            for j in 0..d {
                mean[j] += g[j].as_f64() - exact[j];
            }
        }
        let n = n_probes as f64;
        let worst = (0..d)
            .map(|j| div0((mean[j] / n).abs(), 5.0 * c.sigma_vec[j].as_f64() / n.sqrt()))
            .fold(0.0, f64::max);
        AssumptionCheck {
            passed: worst <= 1.0,
            worst_ratio: worst,
            probes: n_probes,
        }
    };

    let mut noise_worst = 0.0f64;
    let mut smooth_worst = 0.0f64;
    for k in 0..n_probes {
        let x = probe_point(&c.x_init, rng);
        let xi = p.draw_noise(rng);
        let g = p.stoch_grad(&x, &xi)?.to_f64();
        let exact = p.exact_grad(&x)?.to_f64();
        for j in 0..d {
            let dev = (g[j] - exact[j]).abs();
            // `exact + noise − exact` may round past σ by a few ulps of the gradient.
            let allowance = c.sigma_vec[j].as_f64() + 4.0 * f64::EPSILON * (g[j].abs() + exact[j].abs());
            noise_worst = noise_worst.max(div0(dev, allowance));
        }

        let radius = 10f64.powf(rng.gen_range(-3.0..=0.0));
        let y = if k % 2 == 0 {
            let axis = rng.gen_range(0..d);
            let mut y = x.clone();
            y[axis] = y[axis] + S::lit(radius);
            y
        } else {
            let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            Vector::from_fn(d, |j| x[j] + S::lit(radius * dir[j] / norm))
        };
        let gy = p.stoch_grad(&y, &xi)?.to_f64();
        let dist = y.sub(&x)?.to_f64().l2();
        if dist == 0.0 {
            continue;
        }
        for j in 0..d {
            let lhs = (gy[j] - g[j]).abs() * sqrt_d;
            let rhs = c.l_vec[j].as_f64() * dist;
            smooth_worst = smooth_worst.max(lhs / rhs);
        }
    }

    Ok(AssumptionReport {
        unbiasedness,
        bounded_noise: AssumptionCheck {
            passed: noise_worst <= limit,
            worst_ratio: noise_worst,
            probes: n_probes,
        },
        smoothness: AssumptionCheck {
            passed: smooth_worst <= limit,
            worst_ratio: smooth_worst,
            probes: n_probes,
        },
    })
}
