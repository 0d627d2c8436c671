use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    ConvexityClass, FiniteSum, Objective, ProblemConstants, ProblemSpec, DEFAULT_BOX_RADIUS,
};
use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// Weight-decay default, matching the usual deep-net training setting.
pub const DEFAULT_L2: f64 = 0.0005;

const PRESOLVE_GRAD_TOL: f64 = 1e-10;
const PRESOLVE_MAX_ITERS: usize = 200;
const MAX_REGENERATIONS: u64 = 64;

/// Two isotropic Gaussian blobs centred at `±separation·u` for a random unit
/// direction `u`. Labels are `±1` with equal probability.
pub(super) fn gaussian_blobs(
    n: usize,
    dim: usize,
    separation: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    u.iter_mut().for_each(|v| *v /= norm);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for &ui in &u {
            let noise: f64 = StandardNormal.sample(&mut *rng);
            features.push(y * separation * ui + noise);
        }
        labels.push(y);
    }
    (features, labels)
}

/// `log(1 + e^z)` without overflow.
pub(super) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(super) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary logistic loss `(1/n) Σ log(1 + exp(−y_i wᵀa_i)) + (λ/2)‖w‖²`.
#[derive(Debug, Clone)]
pub struct LogReg {
    n: usize,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    l2: f64,
}

impl LogReg {
    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn margin(&self, i: usize, w: &[f64]) -> f64 {
        self.labels[i] * self.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Unregularized mean loss.
    pub fn data_loss(&self, w: &[f64]) -> f64 {
        (0..self.n).map(|i| softplus(-self.margin(i, w))).sum::<f64>() / self.n as f64
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    fn accumulate_sample(&self, i: usize, w: &[f64], scale: f64, out: &mut [f64]) {
        let c = -self.labels[i] * sigmoid(-self.margin(i, w)) * scale;
        for (o, a) in out.iter_mut().zip(self.row(i)) {
            *o += c * a;
        }
    }

    fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::from_diagonal_element(self.dim, self.dim, self.l2);
        for i in 0..self.n {
            let s = sigmoid(self.margin(i, w));
            let c = s * (1.0 - s) / self.n as f64;
            let a = DVector::from_column_slice(self.row(i));
            h.ger(c, &a, &a, 1.0);
        }
        h
    }
}

impl Objective for LogReg {
    fn value(&self, w: &[f64]) -> f64 {
        self.data_loss(w) + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient_into(&self, w: &[f64], out: &mut [f64]) {
        let all: Vec<usize> = (0..self.n).collect();
        self.batch_gradient_into(&all, w, out);
    }

    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        Some(self)
    }
}

impl FiniteSum for LogReg {
    fn n_samples(&self) -> usize {
        self.n
    }

    fn batch_gradient_into(&self, indices: &[usize], w: &[f64], out: &mut [f64]) {
        for (o, wi) in out.iter_mut().zip(w) {
            *o = self.l2 * wi;
        }
        let scale = 1.0 / indices.len() as f64;
        for &i in indices {
            self.accumulate_sample(i, w, scale, out);
        }
    }
}

/// Damped Newton pre-solve. Returns `(w*, f*)`, or `None` if the gradient
/// tolerance is not reached (no minimizer exists for separable data with λ = 0).
fn presolve(lr: &LogReg) -> Option<(Vec<f64>, f64)> {
    let mut w = vec![0.0; lr.dim];
    let mut g = vec![0.0; lr.dim];
    for _ in 0..PRESOLVE_MAX_ITERS {
        lr.gradient_into(&w, &mut g);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= PRESOLVE_GRAD_TOL {
            return Some((w.clone(), lr.value(&w)));
        }
        let h = lr.hessian(&w);
        let step = h.cholesky()?.solve(&DVector::from_column_slice(&g));
        let f0 = lr.value(&w);
        let slope: f64 = -step.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect();
            if lr.value(&trial) <= f0 + 1e-4 * t * slope || t < 1e-12 {
                w = trial;
                break;
            }
            t *= 0.5;
        }
    }
    None
}

pub fn make_logreg(n_samples: usize, dim: usize, seed: u64) -> Result<ProblemSpec> {
    make_logreg_with(n_samples, dim, seed, DEFAULT_L2, 1.0)
}

/// Logistic regression on Gaussian blobs with configurable weight decay and
/// blob separation. Degenerate single-label draws are regenerated from the
/// next seed and noted on the spec.
pub fn make_logreg_with(
    n_samples: usize,
    dim: usize,
    seed: u64,
    l2: f64,
    separation: f64,
) -> Result<ProblemSpec> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be ≥ 1".into()));
    }
    if dim == 0 {
        return Err(Error::EmptyVector);
    }
    if l2.is_nan() || l2 < 0.0 {
        return Err(Error::InvalidConfig(format!("l2 must be ≥ 0, got {l2}")));
    }
    let mut notes = Vec::new();
    let mut used_seed = seed;
    let (features, labels) = loop {
        let mut rng = ChaCha8Rng::seed_from_u64(used_seed);
        let (f, y) = gaussian_blobs(n_samples, dim, separation, &mut rng);
        if y.iter().any(|v| *v > 0.0) && y.iter().any(|v| *v < 0.0) {
            break (f, y);
        }
        notes.push(format!("seed {used_seed} produced single-label data; regenerated"));
        used_seed = used_seed.wrapping_add(1);
        if used_seed.wrapping_sub(seed) > MAX_REGENERATIONS {
            return Err(Error::InvalidConfig(
                "could not draw two-label data; increase n_samples".into(),
            ));
        }
    };
    let lr = LogReg {
        n: n_samples,
        dim,
        features,
        labels,
        l2,
    };

    // Per-sample Hessians are bounded by a aᵀ/4, so L ≤ ‖A‖_F²/(4n) + λ.
    let frob_sq: f64 = lr.features.iter().map(|v| v * v).sum();
    let max_row = (0..n_samples)
        .map(|i| lr.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut constants = ProblemConstants::new(ConvexityClass::SmoothConvex);
    constants.l = Some(frob_sq / (4.0 * n_samples as f64) + l2);
    constants.box_radius = Some(DEFAULT_BOX_RADIUS);
    constants.g = Some(max_row + l2 * DEFAULT_BOX_RADIUS * (dim as f64).sqrt());
    let solved = presolve(&lr);
    if solved.is_none() {
        notes.push("pre-solve did not reach the gradient tolerance; f_star unknown".into());
    }
    constants.f_star = solved.as_ref().map(|s| s.1);
    let x_star = solved.map(|s| ParamVector::new(s.0)).transpose()?;

    let mut spec = ProblemSpec::new(
        format!("logreg-n{n_samples}-d{dim}-seed{used_seed}"),
        constants,
        ParamVector::zeros(dim),
        x_star,
        Arc::new(lr),
    )?;
    spec.notes = notes;
    Ok(spec)
}
