use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense coordinate vector of fixed length `d`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<S>(Vec<S>);

impl<S: Scalar> Vector<S> {
    pub fn zeros(d: usize) -> Self {
        Vector(vec![S::zero(); d])
    }

    pub fn filled(d: usize, value: S) -> Self {
        Vector(vec![value; d])
    }

    pub fn from_fn(d: usize, f: impl FnMut(usize) -> S) -> Self {
        Vector((0..d).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<S> {
        self.0
    }

    pub fn l1(&self) -> S {
        self.0.iter().fold(S::zero(), |acc, v| acc + v.abs())
    }

    pub fn l2(&self) -> S {
        self.0.iter().fold(S::zero(), |acc, v| acc + *v * *v).sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.0.iter().fold(S::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.expect_dim(other.dim())?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(S, S) -> S) -> Self {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| f(*a, *b)).collect())
    }

    pub fn map(&self, f: impl FnMut(&S) -> S) -> Self {
        Vector(self.0.iter().map(f).collect())
    }

    pub fn expect_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }

    /// Fails with `NonFiniteValue` naming `what` at the first NaN/Inf entry.
    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(index) => Err(Error::NonFiniteValue { what, index }),
        }
    }

    pub fn to_f64(&self) -> Vector<f64> {
        Vector(self.0.iter().map(|v| v.as_f64()).collect())
    }
}

impl<S> From<Vec<S>> for Vector<S> {
    fn from(v: Vec<S>) -> Self {
        Vector(v)
    }
}

impl<S> Deref for Vector<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.0
    }
}

impl<S> DerefMut for Vector<S> {
    fn deref_mut(&mut self) -> &mut [S] {
        &mut self.0
    }
}

impl<S> FromIterator<S> for Vector<S> {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        let v = Vector::from(vec![3.0, -4.0]);
        assert_eq!(v.l1(), 7.0);
        assert_eq!(v.l2(), 5.0);
        assert_eq!(v.max_abs(), 4.0);
    }

    #[test]
    fn finite_check_reports_index() {
        let v = Vector::from(vec![1.0, f64::NAN]);
        assert_eq!(
            v.ensure_finite("x"),
            Err(Error::NonFiniteValue { what: "x", index: 1 })
        );
    }

    #[test]
    fn sub_rejects_mismatch() {
        let a = Vector::from(vec![1.0f32, 2.0]);
        let b = Vector::from(vec![1.0f32]);
        assert!(matches!(a.sub(&b), Err(Error::DimensionMismatch { .. })));
    }
}
