//! Dense real vectors over the iterate space.
//!
//! All constructors reject non-finite entries, and every arithmetic helper that
//! can overflow reports [`Error::NonFinite`] instead of returning NaN or Inf.

use serde::{Deserialize, Serialize};
use std::ops::Index;

use crate::error::{Error, Result};

/// A dense, finite, non-empty vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVector);
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ParamVector::new"));
        }
        Ok(Self(entries))
    }

    /// # Panics
    /// Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "ParamVector dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Mutable access for in-place kernels. Callers must restore finiteness,
    /// typically by finishing with [`ParamVector::ensure_finite`].
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            })
        }
    }

    /// Euclidean norm.
    pub fn norm2(&self) -> f64 {
        self.norm2_sq().sqrt()
    }

    pub fn norm2_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        other.ensure_dim(self.dim())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        axpy(-1.0, other, self)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        axpy(1.0, other, self)
    }

    pub fn scale(&self, a: f64) -> Result<Self> {
        let out = Self(self.0.iter().map(|v| a * v).collect());
        out.ensure_finite("scale")?;
        Ok(out)
    }

    /// `self += a * x`, in place.
    pub fn axpy_in_place(&mut self, a: f64, x: &Self) -> Result<()> {
        x.ensure_dim(self.dim())?;
        for (yi, xi) in self.0.iter_mut().zip(&x.0) {
            *yi += a * xi;
        }
        self.ensure_finite("axpy_in_place")
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        other.ensure_dim(self.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn distance_sq(&self, other: &Self) -> Result<f64> {
        other.ensure_dim(self.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Self {
        v.0
    }
}

/// Returns `a * x + y`.
pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    x.ensure_dim(y.dim())?;
    let out = ParamVector(x.0.iter().zip(&y.0).map(|(xi, yi)| a * xi + yi).collect());
    out.ensure_finite("axpy")?;
    Ok(out)
}

pub fn norm2(x: &ParamVector) -> f64 {
    x.norm2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(0.0, &pv(&[3.0, 4.0]), &pv(&[1.0, 2.0])).unwrap(), pv(&[1.0, 2.0]));
        assert_eq!(axpy(1.0, &pv(&[0.0, 0.0]), &pv(&[5.0, 6.0])).unwrap(), pv(&[5.0, 6.0]));
        assert_eq!(axpy(2.0, &pv(&[1.0, -1.0]), &pv(&[1.0, 1.0])).unwrap(), pv(&[3.0, -1.0]));
    }

    #[test]
    fn axpy_dimension_mismatch() {
        let err = axpy(1.0, &pv(&[1.0]), &pv(&[1.0, 2.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn axpy_overflow_is_reported() {
        let big = pv(&[f64::MAX]);
        assert_eq!(axpy(2.0, &big, &big).unwrap_err(), Error::NonFinite("axpy"));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm2(&pv(&[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(norm2(&pv(&[3.0, 4.0])), 5.0);
        assert_eq!(norm2(&pv(&[1.0])), 1.0);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert_eq!(ParamVector::new(vec![]).unwrap_err(), Error::EmptyVector);
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParamVector::try_from(vec![f64::NEG_INFINITY]).is_err());
    }

    proptest! {
        #[test]
        fn norm_sq_matches_dot(v in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let x = pv(&v);
            let n = x.norm2();
            let d = x.dot(&x).unwrap();
            prop_assert!((n * n - d).abs() <= 1e-12 * d.max(1e-300));
        }

        #[test]
        fn axpy_exact_on_integers(
            a in -1000i64..1000,
            pairs in prop::collection::vec((-1_000_000i64..1_000_000, -1_000_000i64..1_000_000), 1..32),
        ) {
            let x = pv(&pairs.iter().map(|p| p.0 as f64).collect::<Vec<_>>());
            let y = pv(&pairs.iter().map(|p| p.1 as f64).collect::<Vec<_>>());
            let out = axpy(a as f64, &x, &y).unwrap();
            for (i, (xi, yi)) in pairs.iter().enumerate() {
                prop_assert_eq!(out[i], (a * xi + yi) as f64);
            }
        }
    }
}
