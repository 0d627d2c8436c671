use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ConvexityClass, Objective, ProblemConstants, ProblemSpec, DEFAULT_BOX_RADIUS};
use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// `f(x) = ½ xᵀAx − bᵀx` with `A` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
    /// Row-major.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Quadratic {
    fn ax(&self, x: &[f64], i: usize) -> f64 {
        self.a[i * self.dim..(i + 1) * self.dim]
            .iter()
            .zip(x)
            .map(|(a, x)| a * x)
            .sum()
    }
}

impl Objective for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| 0.5 * x[i] * self.ax(x, i) - self.b[i] * x[i])
            .sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.ax(x, i) - self.b[i];
        }
    }
}

/// Random SPD quadratic with eigenvalues log-spaced on `[1, condition_number]`
/// and a random rotation, reproducible from `seed`.
pub fn make_quadratic(dim: usize, condition_number: f64, seed: u64) -> Result<ProblemSpec> {
    if dim == 0 {
        return Err(Error::EmptyVector);
    }
    if condition_number.is_nan() || condition_number < 1.0 || !condition_number.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "condition_number must be ≥ 1, got {condition_number}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let q = gauss.qr().q();
    let eig: DVector<f64> = DVector::from_fn(dim, |i, _| {
        if dim == 1 {
            condition_number
        } else {
            condition_number.powf(i as f64 / (dim - 1) as f64)
        }
    });
    let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let b: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut spec = make_quadratic_from(dim, a.transpose().as_slice().to_vec(), b)?;
    spec.name = format!("quadratic-d{dim}-k{condition_number}-seed{seed}");
    Ok(spec)
}

/// Quadratic from an explicit row-major `A` and `b`. Fails if `A` is not SPD.
pub fn make_quadratic_from(dim: usize, a: Vec<f64>, b: Vec<f64>) -> Result<ProblemSpec> {
    if a.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            found: a.len(),
        });
    }
    if b.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: b.len(),
        });
    }
    let am = DMatrix::from_row_slice(dim, dim, &a);
    if (&am - am.transpose()).amax() > 1e-12 * am.amax().max(1.0) {
        return Err(Error::InvalidConfig("A is not symmetric".into()));
    }
    let chol = am
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidConfig("A is not positive definite".into()))?;
    let bv = DVector::from_column_slice(&b);
    let x_star = chol.solve(&bv);
    let f_star = -0.5 * bv.dot(&x_star);
    let lambda_max = am
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(*v));

    let mut constants = ProblemConstants::new(ConvexityClass::SmoothConvex);
    constants.l = Some(lambda_max);
    constants.f_star = Some(f_star);
    // ‖Ax − b‖ ≤ λ_max·R·√d + ‖b‖ over the box.
    constants.box_radius = Some(DEFAULT_BOX_RADIUS);
    constants.g = Some(lambda_max * DEFAULT_BOX_RADIUS * (dim as f64).sqrt() + bv.norm());

    ProblemSpec::new(
        "quadratic",
        constants,
        ParamVector::zeros(dim),
        Some(ParamVector::new(x_star.as_slice().to_vec())?),
        Arc::new(Quadratic { dim, a, b }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn one_dimensional_hand_example() {
        let p = make_quadratic_from(1, vec![2.0], vec![0.0]).unwrap();
        let x = ParamVector::new(vec![3.0]).unwrap();
        assert_eq!(p.value_at(&x).unwrap(), 9.0);
        assert_eq!(p.full_gradient_at(&x).unwrap().as_slice(), &[6.0]);
        assert_eq!(p.constants.l, Some(2.0));
        assert_eq!(p.constants.f_star, Some(0.0));
    }

    #[test]
    fn minimizer_has_zero_gradient() {
        let p = make_quadratic(8, 50.0, 3).unwrap();
        let g = p.full_gradient_at(p.x_star.as_ref().unwrap()).unwrap();
        assert!(g.norm2() < 1e-10, "{}", g.norm2());
    }

    #[test]
    fn gap_is_nonnegative_on_random_points() {
        let p = make_quadratic(6, 20.0, 11).unwrap();
        let f_star = p.constants.f_star.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x = ParamVector::new((0..6).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            assert!(p.value_at(&x).unwrap() - f_star >= -1e-9);
        }
    }

    #[test]
    fn declared_l_is_top_eigenvalue() {
        let p = make_quadratic(5, 30.0, 1).unwrap();
        assert!((p.constants.l.unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn reproducible_from_seed() {
        let a = make_quadratic(4, 10.0, 9).unwrap();
        let b = make_quadratic(4, 10.0, 9).unwrap();
        let x = ParamVector::new(vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        assert_eq!(a.value_at(&x).unwrap(), b.value_at(&x).unwrap());
        assert_eq!(a.x_star, b.x_star);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(make_quadratic(3, 0.5, 0).is_err());
        assert!(make_quadratic(0, 2.0, 0).is_err());
        assert!(make_quadratic_from(2, vec![1.0, 2.0, 2.0, 1.0], vec![0.0, 0.0]).is_err());
    }
}
