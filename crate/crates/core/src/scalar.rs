use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the optimizers, problems and bounds are written over.
///
/// Implemented for `f32` and `f64`. Experiments and reports run in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the value is not representable
    /// at all (never the case for finite inputs and IEEE targets).
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Element-wise quotient with the `0/0 = 0` convention.
#[inline]
pub fn div0<S: Scalar>(num: S, den: S) -> S {
    if num.is_zero() && den.is_zero() {
        S::zero()
    } else {
        num / den
    }
}

/// `max{1, log(1/δ)}`, the confidence multiplier shared by all concentration bounds.
#[inline]
pub fn log_confidence<S: Scalar>(delta: S) -> S {
    S::one().max((S::one() / delta).ln())
}
