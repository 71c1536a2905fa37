//! Parameter choices and the reference convergence bound for Generalized SignSTORM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{rho, HyperParams, StepSize};
use crate::scalar::Scalar;

fn check_rho<S: Scalar>(r: S) -> Result<()> {
    if r >= S::zero() && r < S::one() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "rho",
            value: r.as_f64(),
            range: "[0, 1)",
        })
    }
}

/// `g(ρ) = 3` on `[0, 1/2]`, `6√(ρ(1−ρ))` on `(1/2, 1)`.
pub fn g_rho<S: Scalar>(r: S) -> Result<S> {
    check_rho(r)?;
    if r <= S::lit(0.5) {
        Ok(S::lit(3.0))
    } else {
        Ok(S::lit(6.0) * (r * (S::one() - r)).sqrt())
    }
}

/// `c(ρ) = min{1/2, g(ρ)}`.
pub fn c_rho<S: Scalar>(r: S) -> Result<S> {
    Ok(S::lit(0.5).min(g_rho(r)?))
}

/// Closed form of the point where `c(ρ)` leaves `1/2`: `(6 + √35)/12`.
pub fn rho_crossover<S: Scalar>() -> S {
    (S::lit(6.0) + S::lit(35.0).sqrt()) / S::lit(12.0)
}

/// Locates the crossover of `c(ρ)` below `1/2` by bisection on `[1/2, 1)`.
pub fn locate_crossover(tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.5f64, 1.0 - f64::EPSILON);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if c_rho(mid).expect("mid in range") < 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs<S> {
    /// `Δ = F(x₁) − F(x*)` (or an upper bound).
    pub delta: S,
    pub l1_norm: S,
    pub sigma_l1: S,
    pub horizon: usize,
    pub beta2: S,
    /// Failure probability `δ` of the high-probability statement.
    pub confidence: S,
    pub dim: usize,
    /// Replacement for `Δ` when `Δ·‖L‖₁ = 0`; without it such inputs are rejected.
    pub delta_floor: Option<S>,
}

impl<S: Scalar> TheoremInputs<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= S::zero() && self.delta.is_finite()) {
            return Err(Error::InvalidConstant("delta must be nonnegative".into()));
        }
        if !(self.l1_norm > S::zero() && self.l1_norm.is_finite()) {
            return Err(Error::InvalidConstant("||L||_1 must be positive".into()));
        }
        if !(self.sigma_l1 >= S::zero() && self.sigma_l1.is_finite()) {
            return Err(Error::InvalidConstant("||sigma||_1 must be nonnegative".into()));
        }
        if self.horizon == 0 {
            return Err(Error::OutOfRange {
                name: "T",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        if self.dim == 0 {
            return Err(Error::InvalidConstant("dimension must be at least 1".into()));
        }
        if !(self.beta2 >= S::zero() && self.beta2 < S::one()) {
            return Err(Error::OutOfRange {
                name: "beta2",
                value: self.beta2.as_f64(),
                range: "[0, 1)",
            });
        }
        if !(self.confidence > S::zero() && self.confidence < S::one()) {
            return Err(Error::OutOfRange {
                name: "confidence delta",
                value: self.confidence.as_f64(),
                range: "(0, 1)",
            });
        }
        Ok(())
    }

    /// `Δ`, floored when it would zero out `Δ·‖L‖₁`. The flag reports the substitution.
    fn effective_delta(&self) -> Result<(S, bool)> {
        if self.delta > S::zero() {
            return Ok((self.delta, false));
        }
        match self.delta_floor {
            Some(f) if f > S::zero() && f.is_finite() => Ok((f, true)),
            _ => Err(Error::InvalidConstant(
                "delta * ||L||_1 = 0; supply a positive delta floor".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Deserialize<'de> + Default"))]
pub struct TheoremChoice<S> {
    pub params: HyperParams<S>,
    pub rho: S,
    pub c_rho: S,
    /// `Δ` was replaced by the caller's floor.
    pub delta_floored: bool,
}

/// `1 − β₁ = min{1, (Δ‖L‖₁/(‖σ‖₁²T))^{2/3}}`, with a zero `‖σ‖₁` read as an infinite ratio.
fn theorem_momentum_gap<S: Scalar>(delta: S, inp: &TheoremInputs<S>) -> S {
    if inp.sigma_l1.is_zero() {
        return S::one();
    }
    let t = S::from_usize_exact(inp.horizon);
    let ratio = delta * inp.l1_norm / (inp.sigma_l1 * inp.sigma_l1 * t);
    S::one().min(ratio.powf(S::lit(2.0) / S::lit(3.0)))
}

/// Theorem-mode parameters:
/// `β₁ = 1 − min{1, (Δ‖L‖₁/(‖σ‖₁²T))^{2/3}}` and
/// `η = (1−β₁)^{1/4} √((1−β₂)Δ) / √(‖L‖₁T)`.
pub fn theorem_params<S: Scalar>(inp: &TheoremInputs<S>) -> Result<TheoremChoice<S>> {
    inp.validate()?;
    let (delta, delta_floored) = inp.effective_delta()?;
    let gap = theorem_momentum_gap(delta, inp);
    let beta1 = S::one() - gap;
    let t = S::from_usize_exact(inp.horizon);
    let eta = gap.powf(S::lit(0.25)) * ((S::one() - inp.beta2) * delta).sqrt()
        / (inp.l1_norm * t).sqrt();
    let r = rho(beta1, inp.beta2);
    if !(r < S::one()) {
        return Err(Error::RhoConstraintViolated { rho: r.as_f64() });
    }
    let params = HyperParams::with_step(StepSize::Constant { eta }, beta1, inp.beta2, S::zero())?;
    Ok(TheoremChoice {
        params,
        rho: r,
        c_rho: c_rho(r)?,
        delta_floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Divide by `√T` once.
    ConstantT,
    /// Divide by `√t` at every step.
    PerStepSqrtT,
}

/// Practical parameters: `β₁ = 1 − β/T^{2/3}` (unless overridden) and
/// `η = α(1−β₁)^{1/4}√(1−β₂)/√T`, or `/√t` per step.
pub fn practical_params<S: Scalar>(
    alpha: S,
    beta: S,
    horizon: usize,
    beta1_override: Option<S>,
    beta2: S,
    schedule: ScheduleKind,
) -> Result<HyperParams<S>> {
    if !(alpha > S::zero() && alpha.is_finite()) {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha.as_f64(),
            range: "(0, inf)",
        });
    }
    if !(beta >= S::zero() && beta <= S::one()) {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta.as_f64(),
            range: "[0, 1]",
        });
    }
    if horizon == 0 {
        return Err(Error::OutOfRange {
            name: "T",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    let t = S::from_usize_exact(horizon);
    let gap = match beta1_override {
        Some(b1) => S::one() - b1,
        None => beta / t.powf(S::lit(2.0) / S::lit(3.0)),
    };
    let beta1 = S::one() - gap;
    let scale = alpha * gap.max(S::zero()).powf(S::lit(0.25)) * (S::one() - beta2).sqrt();
    let step = match schedule {
        ScheduleKind::ConstantT => StepSize::Constant {
            eta: scale / t.sqrt(),
        },
        ScheduleKind::PerStepSqrtT => StepSize::PerStepSqrtT { scale },
    };
    let hp = HyperParams::with_step(step, beta1, beta2, S::zero())?;
    hp.checked_rho()?;
    Ok(hp)
}

/// Components of the reference bound with every hidden constant set to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms<S> {
    /// `1/((1−ρ)c(ρ))`.
    pub prefactor: S,
    /// `log(dT/δ)`.
    pub log_factor: S,
    /// `√(Δ‖L‖₁/T)`.
    pub deterministic: S,
    /// `(Δ‖L‖₁‖σ‖₁/T)^{1/3}`.
    pub noisy: S,
    /// `‖σ‖₁(1/T + (‖σ‖₁⁴/(Δ²‖L‖₁²T))^{1/3})`.
    pub noise_floor: S,
}

impl<S: Scalar> BoundTerms<S> {
    pub fn total(&self) -> S {
        self.prefactor * (self.log_factor * (self.deterministic + self.noisy) + self.noise_floor)
    }
}

pub fn theorem_bound_terms<S: Scalar>(inp: &TheoremInputs<S>, r: S) -> Result<BoundTerms<S>> {
    inp.validate()?;
    if !(r >= S::zero() && r < S::one()) {
        return Err(Error::RhoConstraintViolated { rho: r.as_f64() });
    }
    let (delta, _) = inp.effective_delta()?;
    let t = S::from_usize_exact(inp.horizon);
    let d = S::from_usize_exact(inp.dim);
    let third = S::one() / S::lit(3.0);
    let dl = delta * inp.l1_norm;
    let s1 = inp.sigma_l1;
    let noise_floor = if s1.is_zero() {
        S::zero()
    } else {
        let s4 = s1 * s1 * s1 * s1;
        s1 * (S::one() / t + (s4 / (dl * dl * t)).powf(third))
    };
    Ok(BoundTerms {
        prefactor: S::one() / ((S::one() - r) * c_rho(r)?),
        log_factor: (d * t / inp.confidence).ln(),
        deterministic: (dl / t).sqrt(),
        noisy: (dl * s1 / t).powf(third),
        noise_floor,
    })
}

/// Order-of-magnitude reference for `min_t ‖∇F(x_t)‖₁` (hidden constants set to 1).
pub fn theorem_bound<S: Scalar>(inp: &TheoremInputs<S>, r: S) -> Result<S> {
    Ok(theorem_bound_terms(inp, r)?.total())
}
