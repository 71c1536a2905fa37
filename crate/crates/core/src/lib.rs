//! Generalized SignSTORM: a coordinate-normalized STORM optimizer, its baselines,
//! synthetic problems with checkable smoothness and noise constants, theorem-derived
//! parameter choices, empirical diagnostics of the analysis, and a seeded
//! experiment harness.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); experiments,
//! reports and diagnostics run in `f64`.

// `!(a <= b)` is used so that NaN counts as a violation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod optim;
pub mod problems;
pub mod scalar;
pub mod theory;
pub mod vector;

pub use error::{Error, Result};
pub use optim::{step, step_signstorm, GradientPair, HyperParams, Method, OptimizerState, StepSize};
pub use problems::{ProblemConstants, SharedProblem, StochasticProblem};
pub use scalar::Scalar;
pub use vector::Vector;

pub type Vector64 = Vector<f64>;
pub type Vector32 = Vector<f32>;
pub type HyperParams64 = HyperParams<f64>;
pub type HyperParams32 = HyperParams<f32>;
pub type State64 = OptimizerState<f64>;
pub type State32 = OptimizerState<f32>;
pub type Constants64 = ProblemConstants<f64>;
pub type Problem64 = SharedProblem<f64>;
