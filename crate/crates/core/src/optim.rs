//! Generalized SignSTORM and the baseline optimizers it is compared against.
//!
//! Every method advances the same [`OptimizerState`] from a [`GradientPair`]:
//! the stochastic gradient at the current iterate and, for the STORM family,
//! the gradient at the previous iterate evaluated with the *same* sample.
//! All vector operations are element-wise. Division uses `0/0 = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{div0, Scalar};
use crate::vector::Vector;

/// Step-size rule. The `1/√T` schedules resolve to `Constant` once `T` is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum StepSize<S> {
    Constant { eta: S },
    /// `η_t = scale / √t`, for runs with an unknown horizon.
    PerStepSqrtT { scale: S },
}

impl<S: Scalar> StepSize<S> {
    pub fn at(&self, t: usize) -> S {
        match *self {
            StepSize::Constant { eta } => eta,
            StepSize::PerStepSqrtT { scale } => scale / S::from_usize_exact(t.max(1)).sqrt(),
        }
    }

    /// Largest step over any horizon (the first one for decaying schedules).
    pub fn max_eta(&self) -> S {
        self.at(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams<S> {
    pub step: StepSize<S>,
    pub beta1: S,
    pub beta2: S,
    /// Added to `√v` in the denominator; zero reproduces Algorithm 1 exactly.
    #[serde(default)]
    pub eps_guard: S,
}

impl<S: Scalar> HyperParams<S> {
    pub fn new(eta: S, beta1: S, beta2: S) -> Result<Self> {
        Self::with_step(StepSize::Constant { eta }, beta1, beta2, S::zero())
    }

    pub fn with_step(step: StepSize<S>, beta1: S, beta2: S, eps_guard: S) -> Result<Self> {
        let hp = HyperParams {
            step,
            beta1,
            beta2,
            eps_guard,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn with_eps_guard(mut self, eps_guard: S) -> Result<Self> {
        self.eps_guard = eps_guard;
        self.validate()?;
        Ok(self)
    }

    /// Adam's customary `(β₁, β₂, ε) = (0.9, 0.999, 1e-8)`.
    pub fn adam(lr: S) -> Result<Self> {
        Self::with_step(
            StepSize::Constant { eta: lr },
            S::lit(0.9),
            S::lit(0.999),
            S::lit(1e-8),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let scale = match self.step {
            StepSize::Constant { eta } => eta,
            StepSize::PerStepSqrtT { scale } => scale,
        };
        if !(scale.is_finite() && scale > S::zero()) {
            return Err(out_of_range("eta", scale, "(0, inf)"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b >= S::zero() && b < S::one()) {
                return Err(out_of_range(name, b, "[0, 1)"));
            }
        }
        if !(self.eps_guard >= S::zero() && self.eps_guard.is_finite()) {
            return Err(out_of_range("eps_guard", self.eps_guard, "[0, inf)"));
        }
        Ok(())
    }

    pub fn eta_at(&self, t: usize) -> S {
        self.step.at(t)
    }

    pub fn rho(&self) -> S {
        rho(self.beta1, self.beta2)
    }

    /// Returns ρ, or `RhoConstraintViolated` when ρ ≥ 1.
    pub fn checked_rho(&self) -> Result<S> {
        let r = self.rho();
        if r < S::one() {
            Ok(r)
        } else {
            Err(Error::RhoConstraintViolated { rho: r.as_f64() })
        }
    }
}

fn out_of_range<S: Scalar>(name: &'static str, v: S, range: &'static str) -> Error {
    Error::OutOfRange {
        name,
        value: v.as_f64(),
        range,
    }
}

/// `ρ = √β₂ / β₁` with `0/0 = 0`; `+∞` when `β₁ = 0 < β₂`.
pub fn rho<S: Scalar>(beta1: S, beta2: S) -> S {
    div0(beta2.sqrt(), beta1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "signstorm")]
    SignStorm,
    Sgd,
    MomentumSgd,
    #[serde(rename = "generalized_signsgd")]
    GeneralizedSignSgd,
    Storm,
    Adam,
    L2NormalizedStorm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SignStorm,
        Method::Sgd,
        Method::MomentumSgd,
        Method::GeneralizedSignSgd,
        Method::Storm,
        Method::Adam,
        Method::L2NormalizedStorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SignStorm => "signstorm",
            Method::Sgd => "sgd",
            Method::MomentumSgd => "momentum_sgd",
            Method::GeneralizedSignSgd => "generalized_signsgd",
            Method::Storm => "storm",
            Method::Adam => "adam",
            Method::L2NormalizedStorm => "l2_normalized_storm",
        }
    }

    /// Whether the estimator needs `∇f(x_{t-1}, Ξ_t)`.
    pub fn uses_prev_grad(self) -> bool {
        matches!(
            self,
            Method::SignStorm | Method::Storm | Method::L2NormalizedStorm
        )
    }

    /// Methods that move by `η·m/√v` with the Algorithm 1 second moment.
    pub fn is_coordinate_normalized(self) -> bool {
        matches!(self, Method::SignStorm | Method::GeneralizedSignSgd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnsupportedKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    /// Current iterate `x_t`.
    pub x: Vector<S>,
    /// Gradient estimator from the last step (`m_{t-1}`).
    pub m: Vector<S>,
    /// Second moment from the last step (`v_{t-1}`), entries never negative.
    pub v: Vector<S>,
    /// `x_{t-1}`; equals `x` before the first step.
    pub prev_x: Vector<S>,
    /// Index of the next iteration, starting at 1.
    pub t: usize,
    /// Displacement applied by the last step, `x_t - x_{t-1}` before rounding.
    pub last_update: Vector<S>,
}

impl<S: Scalar> OptimizerState<S> {
    /// State before iteration 1: `v₀ = 0`.
    pub fn new(x1: Vector<S>) -> Self {
        let d = x1.dim();
        OptimizerState {
            prev_x: x1.clone(),
            x: x1,
            m: Vector::zeros(d),
            v: Vector::zeros(d),
            t: 1,
            last_update: Vector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

/// `∇f(x_t, Ξ_t)` and `∇f(x_{t-1}, Ξ_t)`, both with the same sample `Ξ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair<S> {
    pub curr: Vector<S>,
    /// Unused at `t = 1` and by non-STORM methods.
    pub prev: Vector<S>,
}

impl<S: Scalar> GradientPair<S> {
    pub fn new(curr: Vector<S>, prev: Vector<S>) -> Self {
        GradientPair { curr, prev }
    }

    /// Pair for a method that ignores the previous-iterate gradient.
    pub fn current_only(curr: Vector<S>) -> Self {
        let d = curr.dim();
        GradientPair {
            curr,
            prev: Vector::zeros(d),
        }
    }
}

/// One iteration of Generalized SignSTORM (Algorithm 1).
pub fn step_signstorm<S: Scalar>(
    state: &OptimizerState<S>,
    grads: &GradientPair<S>,
    hp: &HyperParams<S>,
) -> Result<OptimizerState<S>> {
    step(Method::SignStorm, state, grads, hp)
}

/// One iteration of `method`. The input state is left untouched.
pub fn step<S: Scalar>(
    method: Method,
    state: &OptimizerState<S>,
    grads: &GradientPair<S>,
    hp: &HyperParams<S>,
) -> Result<OptimizerState<S>> {
    hp.validate()?;
    let d = state.dim();
    for v in [&state.m, &state.v, &state.prev_x, &grads.curr, &grads.prev] {
        v.expect_dim(d)?;
    }
    let t = state.t.max(1);
    let eta = hp.eta_at(t);

    let (m, v, update) = match method {
        Method::SignStorm => {
            let m = storm_estimate(state, grads, hp.beta1);
            let (v, u) = normalized_update(&m, &state.v, hp, eta);
            (m, v, u)
        }
        Method::GeneralizedSignSgd => {
            let m = ema_estimate(state, grads, hp.beta1);
            let (v, u) = normalized_update(&m, &state.v, hp, eta);
            (m, v, u)
        }
        Method::Storm => {
            let m = storm_estimate(state, grads, hp.beta1);
            let u = m.map(|mj| -(eta * *mj));
            (m, state.v.clone(), u)
        }
        Method::L2NormalizedStorm => {
            let m = storm_estimate(state, grads, hp.beta1);
            let norm = m.l2();
            let u = m.map(|mj| -(eta * div0(*mj, norm)));
            (m, state.v.clone(), u)
        }
        Method::Sgd => {
            let u = grads.curr.map(|g| -(eta * *g));
            (grads.curr.clone(), state.v.clone(), u)
        }
        Method::MomentumSgd => {
            let m = ema_estimate(state, grads, hp.beta1);
            let u = m.map(|mj| -(eta * *mj));
            (m, state.v.clone(), u)
        }
        Method::Adam => adam_update(state, grads, hp, eta, t),
    };

    m.ensure_finite("m")?;
    v.ensure_finite("v")?;
    update.ensure_finite("update")?;
    let x = state.x.zip_map(&update, |x, u| x + u);
    x.ensure_finite("x")?;

    Ok(OptimizerState {
        prev_x: state.x.clone(),
        x,
        m,
        v,
        t: t + 1,
        last_update: update,
    })
}

/// `m_t = β₁(m_{t-1} − ∇f(x_{t-1},Ξ_t)) + ∇f(x_t,Ξ_t)`, or `∇f(x_1,Ξ_1)` at `t = 1`.
fn storm_estimate<S: Scalar>(
    state: &OptimizerState<S>,
    grads: &GradientPair<S>,
    beta1: S,
) -> Vector<S> {
    if state.t <= 1 {
        return grads.curr.clone();
    }
    Vector::from_fn(state.dim(), |j| {
        beta1 * (state.m[j] - grads.prev[j]) + grads.curr[j]
    })
}

/// `m_t = β₁m_{t-1} + (1−β₁)∇f(x_t,Ξ_t)`, seeded with the first gradient like Algorithm 1.
fn ema_estimate<S: Scalar>(
    state: &OptimizerState<S>,
    grads: &GradientPair<S>,
    beta1: S,
) -> Vector<S> {
    if state.t <= 1 {
        return grads.curr.clone();
    }
    Vector::from_fn(state.dim(), |j| {
        beta1 * state.m[j] + (S::one() - beta1) * grads.curr[j]
    })
}

/// `v_t = β₂v_{t-1} + (1−β₂)m_t²` and displacement `−η m_t/(√v_t + ε)`.
fn normalized_update<S: Scalar>(
    m: &Vector<S>,
    v_prev: &Vector<S>,
    hp: &HyperParams<S>,
    eta: S,
) -> (Vector<S>, Vector<S>) {
    let one_minus_b2 = S::one() - hp.beta2;
    let v = Vector::from_fn(m.dim(), |j| hp.beta2 * v_prev[j] + one_minus_b2 * (m[j] * m[j]));
    let u = Vector::from_fn(m.dim(), |j| -(eta * div0(m[j], v[j].sqrt() + hp.eps_guard)));
    (v, u)
}

fn adam_update<S: Scalar>(
    state: &OptimizerState<S>,
    grads: &GradientPair<S>,
    hp: &HyperParams<S>,
    eta: S,
    t: usize,
) -> (Vector<S>, Vector<S>, Vector<S>) {
    let (b1, b2) = (hp.beta1, hp.beta2);
    let g = &grads.curr;
    let m = Vector::from_fn(g.dim(), |j| b1 * state.m[j] + (S::one() - b1) * g[j]);
    let v = Vector::from_fn(g.dim(), |j| b2 * state.v[j] + (S::one() - b2) * g[j] * g[j]);
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = S::one() - b1.powi(exp);
    let c2 = S::one() - b2.powi(exp);
    let u = Vector::from_fn(g.dim(), |j| {
        let m_hat = m[j] / c1;
        let v_hat = v[j] / c2;
        -(eta * div0(m_hat, v_hat.sqrt() + hp.eps_guard))
    });
    (m, v, u)
}

/// Splits the STORM estimator into its momentum part `β₁m + (1−β₁)g_t`
/// and its correction part `β₁(g_t − g_{t-1})`.
pub fn storm_decomposition<S: Scalar>(
    m_prev: &Vector<S>,
    grads: &GradientPair<S>,
    beta1: S,
) -> Result<(Vector<S>, Vector<S>)> {
    let d = m_prev.dim();
    grads.curr.expect_dim(d)?;
    grads.prev.expect_dim(d)?;
    let momentum = Vector::from_fn(d, |j| beta1 * m_prev[j] + (S::one() - beta1) * grads.curr[j]);
    let correction = Vector::from_fn(d, |j| beta1 * (grads.curr[j] - grads.prev[j]));
    Ok((momentum, correction))
}
