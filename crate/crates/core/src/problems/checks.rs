//! Sampled verification of declared problem constants.
//!
//! Each check draws points uniformly from the box `‖x − center‖∞ ≤ radius`
//! and reports the worst observed quantity, so callers can compare it with
//! the declared constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ProblemSpec;

fn sample(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + rng.random_range(-radius..=radius))
        .collect()
}

/// Largest `‖∇f(y) − ∇f(x)‖ / ‖y − x‖` over sampled pairs.
pub fn max_gradient_lipschitz_ratio(
    problem: &ProblemSpec,
    center: &[f64],
    radius: f64,
    pairs: usize,
    seed: u64,
) -> f64 {
    let obj = problem.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut gx, mut gy) = (vec![0.0; problem.dim], vec![0.0; problem.dim]);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x = sample(&mut rng, center, radius);
        let y = sample(&mut rng, center, radius);
        obj.gradient_into(&x, &mut gx);
        obj.gradient_into(&y, &mut gy);
        let dg = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dx = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dx > 0.0 {
            worst = worst.max(dg / dx);
        }
    }
    worst
}

/// Smallest `f(y) − f(x) − ∇f(x)ᵀ(y − x)` over sampled pairs; nonnegative for
/// convex functions.
pub fn min_first_order_convexity_slack(
    problem: &ProblemSpec,
    center: &[f64],
    radius: f64,
    pairs: usize,
    seed: u64,
) -> f64 {
    let obj = problem.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gx = vec![0.0; problem.dim];
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let x = sample(&mut rng, center, radius);
        let y = sample(&mut rng, center, radius);
        obj.gradient_into(&x, &mut gx);
        let lin: f64 = gx.iter().zip(y.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
        worst = worst.min(obj.value(&y) - obj.value(&x) - lin);
    }
    worst
}

/// Largest full-gradient norm at sampled points.
pub fn max_gradient_norm(
    problem: &ProblemSpec,
    center: &[f64],
    radius: f64,
    points: usize,
    seed: u64,
) -> f64 {
    let obj = problem.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![0.0; problem.dim];
    (0..points)
        .map(|_| {
            let x = sample(&mut rng, center, radius);
            obj.gradient_into(&x, &mut g);
            g.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

/// Smallest `f(x) − f*` at sampled points.
pub fn min_gap(problem: &ProblemSpec, center: &[f64], radius: f64, points: usize, seed: u64) -> Option<f64> {
    let f_star = problem.constants.f_star?;
    let obj = problem.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(
        (0..points)
            .map(|_| obj.value(&sample(&mut rng, center, radius)) - f_star)
            .fold(f64::INFINITY, f64::min),
    )
}
