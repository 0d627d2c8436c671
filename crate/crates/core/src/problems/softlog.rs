use std::sync::Arc;

use super::{ConvexityClass, Objective, ProblemConstants, ProblemSpec};
use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// `f(x) = Σ log(1 + x_i²)`: smooth, non-convex, `L = 2`, `‖∇f‖ ≤ √d`.
#[derive(Debug, Clone)]
pub struct SoftLog;

impl Objective for SoftLog {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| (v * v).ln_1p()).sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * v / (1.0 + v * v);
        }
    }
}

pub fn make_softlog(dim: usize) -> Result<ProblemSpec> {
    if dim == 0 {
        return Err(Error::EmptyVector);
    }
    let mut constants = ProblemConstants::new(ConvexityClass::SmoothNonconvex);
    constants.l = Some(2.0);
    constants.g = Some((dim as f64).sqrt());
    constants.f_star = Some(0.0);
    ProblemSpec::new(
        format!("softlog-d{dim}"),
        constants,
        ParamVector::filled(dim, 1.0)?,
        Some(ParamVector::zeros(dim)),
        Arc::new(SoftLog),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_minimum_at_origin() {
        let p = make_softlog(3).unwrap();
        let z = ParamVector::zeros(3);
        assert_eq!(p.value_at(&z).unwrap(), 0.0);
        assert_eq!(p.full_gradient_at(&z).unwrap(), z);
    }

    #[test]
    fn unit_point() {
        let p = make_softlog(1).unwrap();
        let x = ParamVector::new(vec![1.0]).unwrap();
        assert!((p.value_at(&x).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(p.full_gradient_at(&x).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn grid_confirms_smoothness_constant() {
        // Brute-force |d/dx (2x/(1+x²))| by central differences on a dense grid.
        let g = |x: f64| 2.0 * x / (1.0 + x * x);
        let h = 1e-6;
        let (mut best, mut at) = (0.0f64, f64::NAN);
        for i in -20_000..=20_000 {
            let x = i as f64 * 5e-4;
            let d = ((g(x + h) - g(x - h)) / (2.0 * h)).abs();
            if d > best {
                best = d;
                at = x;
            }
        }
        assert!((best - 2.0).abs() < 1e-6, "max slope {best}");
        assert!(at.abs() < 1e-9);
    }
}
