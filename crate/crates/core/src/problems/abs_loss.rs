use std::sync::Arc;

use super::{ConvexityClass, Objective, ProblemConstants, ProblemSpec};
use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// `f(x) = Σ|x_i| / √d`: nonsmooth, convex, with every subgradient of norm ≤ 1.
#[derive(Debug, Clone)]
pub struct AbsLoss {
    inv_sqrt_dim: f64,
}

impl Objective for AbsLoss {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.abs()).sum::<f64>() * self.inv_sqrt_dim
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            // sign(0) is taken as 0.
            *o = if *v > 0.0 {
                self.inv_sqrt_dim
            } else if *v < 0.0 {
                -self.inv_sqrt_dim
            } else {
                0.0
            };
        }
    }
}

pub fn make_abs_loss(dim: usize) -> Result<ProblemSpec> {
    if dim == 0 {
        return Err(Error::EmptyVector);
    }
    let mut constants = ProblemConstants::new(ConvexityClass::NonsmoothConvex);
    constants.g = Some(1.0);
    constants.f_star = Some(0.0);
    ProblemSpec::new(
        format!("abs-d{dim}"),
        constants,
        ParamVector::filled(dim, 1.0)?,
        Some(ParamVector::zeros(dim)),
        Arc::new(AbsLoss {
            inv_sqrt_dim: 1.0 / (dim as f64).sqrt(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimizer() {
        let p = make_abs_loss(5).unwrap();
        let z = ParamVector::zeros(5);
        assert_eq!(p.value_at(&z).unwrap(), 0.0);
        assert_eq!(p.full_gradient_at(&z).unwrap(), z);
    }

    #[test]
    fn four_dim_hand_example() {
        let p = make_abs_loss(4).unwrap();
        let x = ParamVector::new(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(p.value_at(&x).unwrap(), 2.0);
        assert_eq!(p.full_gradient_at(&x).unwrap().as_slice(), &[0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn subgradient_norm_bounded_by_one() {
        let p = make_abs_loss(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = ParamVector::new(
                (0..7)
                    .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-3.0..3.0) })
                    .collect(),
            )
            .unwrap();
            assert!(p.full_gradient_at(&x).unwrap().norm2() <= 1.0 + 1e-15);
        }
    }
}
