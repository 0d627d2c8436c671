//! Stochastic (sub)gradient oracles `G(x; ξ_k)`.
//!
//! Randomness is counter-based: the draw at iteration `k` is generated from a
//! ChaCha stream keyed by `(seed, k)`, so `draw(problem, x, k)` is a pure
//! function of `(seed, k, x)` regardless of call order. Replaying two update
//! forms against the same oracle therefore feeds both the same `ξ_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ProblemConstants, ProblemSpec};
use crate::vector::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleKind {
    Deterministic,
    /// Full gradient plus isotropic Gaussian noise whose variance summed over
    /// coordinates is `noise_std²`.
    AdditiveGaussian { noise_std: f64 },
    /// Mean gradient over `batch_size` samples drawn with replacement.
    Minibatch { batch_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(flatten)]
    pub kind: OracleKind,
    pub seed: u64,
}

/// A single realization `G_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDraw {
    pub gradient: ParamVector,
    pub draw_index: usize,
}

/// The ChaCha stream reserved for iteration `k`.
fn stream(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

impl OracleSpec {
    pub fn new(kind: OracleKind, seed: u64) -> Result<Self> {
        let spec = Self { kind, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn deterministic() -> Self {
        Self {
            kind: OracleKind::Deterministic,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            OracleKind::Deterministic => Ok(()),
            OracleKind::AdditiveGaussian { noise_std } if noise_std >= 0.0 && noise_std.is_finite() => Ok(()),
            OracleKind::AdditiveGaussian { noise_std } => Err(Error::InvalidConfig(format!(
                "noise_std must be ≥ 0, got {noise_std}"
            ))),
            OracleKind::Minibatch { batch_size } if batch_size > 0 => Ok(()),
            OracleKind::Minibatch { .. } => {
                Err(Error::InvalidConfig("batch_size must be > 0".into()))
            }
        }
    }

    /// Variance bound the oracle guarantees, when known analytically.
    pub fn declared_delta2(&self) -> Option<f64> {
        match self.kind {
            OracleKind::Deterministic => Some(0.0),
            OracleKind::AdditiveGaussian { noise_std } => Some(noise_std * noise_std),
            OracleKind::Minibatch { .. } => None,
        }
    }

    /// The problem's constants with the oracle-dependent ones filled in: `δ²`
    /// from the noise model, and `M = G` for the deterministic oracle when `G`
    /// holds globally. Gaussian noise admits no almost-sure norm bound.
    pub fn declare_constants(&self, constants: &ProblemConstants) -> ProblemConstants {
        let mut c = constants.clone();
        c.delta2 = self.declared_delta2().or(c.delta2);
        if matches!(self.kind, OracleKind::Deterministic) && c.box_radius.is_none() {
            c.m = c.m.or(c.g);
        }
        c
    }

    /// Writes `G(x; ξ_k)` into `out`. `x` and `out` must have length `problem.dim`.
    pub fn draw_into(&self, problem: &ProblemSpec, x: &[f64], k: usize, out: &mut [f64]) -> Result<()> {
        let obj = problem.objective();
        match self.kind {
            OracleKind::Deterministic => obj.gradient_into(x, out),
            OracleKind::AdditiveGaussian { noise_std } => {
                obj.gradient_into(x, out);
                if noise_std > 0.0 {
                    let per_coord = noise_std / (problem.dim as f64).sqrt();
                    let mut rng = stream(self.seed, k);
                    for o in out.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *o += per_coord * z;
                    }
                }
            }
            OracleKind::Minibatch { batch_size } => {
                if batch_size == 0 {
                    return Err(Error::InvalidConfig("batch_size must be > 0".into()));
                }
                let fs = problem
                    .finite_sum()
                    .ok_or_else(|| Error::NotFiniteSum(problem.name.clone()))?;
                let n = fs.n_samples();
                let mut rng = stream(self.seed, k);
                let indices: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..n)).collect();
                fs.batch_gradient_into(&indices, x, out);
            }
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("oracle draw"))
        }
    }

    pub fn draw(&self, problem: &ProblemSpec, x: &ParamVector, k: usize) -> Result<OracleDraw> {
        x.ensure_dim(problem.dim)?;
        let mut g = ParamVector::zeros(problem.dim);
        self.draw_into(problem, x.as_slice(), k, g.as_mut_slice())?;
        Ok(OracleDraw {
            gradient: g,
            draw_index: k,
        })
    }

    /// Unbiased sample variance of `n_draws` draws at `x` (counters `0..n_draws`),
    /// summed over coordinates.
    pub fn variance_estimate(&self, problem: &ProblemSpec, x: &ParamVector, n_draws: usize) -> Result<f64> {
        if n_draws < 2 {
            return Err(Error::Precondition("variance_estimate needs n_draws ≥ 2".into()));
        }
        x.ensure_dim(problem.dim)?;
        let d = problem.dim;
        let (mut mean, mut m2) = (vec![0.0; d], vec![0.0; d]);
        let mut g = vec![0.0; d];
        for k in 0..n_draws {
            self.draw_into(problem, x.as_slice(), k, &mut g)?;
            let count = (k + 1) as f64;
            for i in 0..d {
                let delta = g[i] - mean[i];
                mean[i] += delta / count;
                m2[i] += delta * (g[i] - mean[i]);
            }
        }
        Ok(m2.iter().sum::<f64>() / (n_draws - 1) as f64)
    }
}

/// Mean per-sample gradient over an explicit index list.
pub fn batch_gradient(problem: &ProblemSpec, x: &ParamVector, indices: &[usize]) -> Result<ParamVector> {
    x.ensure_dim(problem.dim)?;
    if indices.is_empty() {
        return Err(Error::EmptyInput("batch indices"));
    }
    let fs = problem
        .finite_sum()
        .ok_or_else(|| Error::NotFiniteSum(problem.name.clone()))?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= fs.n_samples()) {
        return Err(Error::Precondition(format!("sample index {bad} out of range")));
    }
    let mut g = ParamVector::zeros(problem.dim);
    fs.batch_gradient_into(indices, x.as_slice(), g.as_mut_slice());
    g.ensure_finite("batch_gradient")?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_abs_loss, make_logreg, make_quadratic, make_softlog};

    fn additive(std: f64, seed: u64) -> OracleSpec {
        OracleSpec::new(OracleKind::AdditiveGaussian { noise_std: std }, seed).unwrap()
    }

    #[test]
    fn deterministic_softlog_at_origin() {
        let p = make_softlog(4).unwrap();
        let d = OracleSpec::deterministic().draw(&p, &ParamVector::zeros(4), 3).unwrap();
        assert_eq!(d.gradient, ParamVector::zeros(4));
        assert_eq!(d.draw_index, 3);
    }

    #[test]
    fn zero_noise_equals_deterministic() {
        let p = make_quadratic(5, 10.0, 1).unwrap();
        let x = ParamVector::new(vec![0.5, -1.0, 2.0, 0.0, 1.5]).unwrap();
        let a = additive(0.0, 42).draw(&p, &x, 7).unwrap();
        let b = OracleSpec::deterministic().draw(&p, &x, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_index_batch_equals_full_gradient() {
        let p = make_logreg(64, 3, 5).unwrap();
        let x = ParamVector::new(vec![0.2, -0.4, 0.9]).unwrap();
        let all: Vec<usize> = (0..64).collect();
        let g = batch_gradient(&p, &x, &all).unwrap();
        let full = p.full_gradient_at(&x).unwrap();
        assert!(g.max_abs_diff(&full).unwrap() < 1e-15);
    }

    #[test]
    fn additive_mean_within_clt_tolerance() {
        let p = make_softlog(3).unwrap();
        let x = ParamVector::new(vec![0.5, -2.0, 1.0]).unwrap();
        let full = p.full_gradient_at(&x).unwrap();
        let std = 0.8;
        let oracle = additive(std, 9);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for k in 0..n {
            let d = oracle.draw(&p, &x, k).unwrap();
            for i in 0..3 {
                mean[i] += d.gradient[i] / n as f64;
            }
        }
        // Per-coordinate std is noise_std/√d; the CLT tolerance uses noise_std.
        let tol = 3.0 * std / (n as f64).sqrt();
        for i in 0..3 {
            assert!((mean[i] - full[i]).abs() <= tol, "coord {i}: {} vs {}", mean[i], full[i]);
        }
    }

    #[test]
    fn reproducible_and_order_independent() {
        let p = make_abs_loss(6).unwrap();
        let x = p.x0.clone();
        let o = additive(1.0, 17);
        let forward: Vec<_> = (0..10).map(|k| o.draw(&p, &x, k).unwrap()).collect();
        let backward: Vec<_> = (0..10).rev().map(|k| o.draw(&p, &x, k).unwrap()).collect();
        for (k, d) in forward.iter().enumerate() {
            assert_eq!(d, &backward[9 - k]);
        }
        assert_ne!(forward[0].gradient, forward[1].gradient);
        assert_ne!(forward[0].gradient, o.with_seed(18).draw(&p, &x, 0).unwrap().gradient);
    }

    #[test]
    fn deterministic_variance_is_zero() {
        let p = make_softlog(2).unwrap();
        let v = OracleSpec::deterministic().variance_estimate(&p, &p.x0, 50).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn additive_variance_is_dimension_independent() {
        for dim in [1, 10, 40] {
            let p = make_softlog(dim).unwrap();
            let v = additive(0.5, 3).variance_estimate(&p, &p.x0, 100_000).unwrap();
            assert!((v - 0.25).abs() <= 0.025, "dim {dim}: {v}");
        }
    }

    #[test]
    fn larger_batches_reduce_variance() {
        let p = make_logreg(200, 4, 2).unwrap();
        let x = ParamVector::new(vec![0.5, 0.5, -0.5, 1.0]).unwrap();
        let small = OracleSpec::new(OracleKind::Minibatch { batch_size: 1 }, 4).unwrap();
        let half = OracleSpec::new(OracleKind::Minibatch { batch_size: 100 }, 4).unwrap();
        let vs = small.variance_estimate(&p, &x, 2000).unwrap();
        let vh = half.variance_estimate(&p, &x, 2000).unwrap();
        assert!(vh <= vs, "{vh} > {vs}");
    }

    #[test]
    fn minibatch_errors() {
        assert!(OracleSpec::new(OracleKind::Minibatch { batch_size: 0 }, 0).is_err());
        let p = make_softlog(2).unwrap();
        let o = OracleSpec::new(OracleKind::Minibatch { batch_size: 4 }, 0).unwrap();
        assert!(matches!(o.draw(&p, &p.x0, 0), Err(Error::NotFiniteSum(_))));
    }

    #[test]
    fn declared_constants() {
        let p = make_abs_loss(3).unwrap();
        let det = OracleSpec::deterministic().declare_constants(&p.constants);
        assert_eq!((det.delta2, det.m), (Some(0.0), Some(1.0)));
        let noisy = additive(2.0, 0).declare_constants(&p.constants);
        assert_eq!((noisy.delta2, noisy.m), (Some(4.0), None));
    }
}
