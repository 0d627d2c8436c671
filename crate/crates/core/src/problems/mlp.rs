use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::logreg::{gaussian_blobs, sigmoid, softplus};
use super::{ConvexityClass, FiniteSum, Objective, ProblemConstants, ProblemSpec};
use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// Offsets of each parameter block inside the flat parameter vector:
/// `[W1 (hidden × dim_in, row-major) | b1 (hidden) | w2 (hidden) | b2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpLayout {
    pub dim_in: usize,
    pub hidden: usize,
}

impl MlpLayout {
    pub fn w1(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.dim_in
    }

    pub fn b1(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.dim_in;
        s..s + self.hidden
    }

    pub fn w2(&self) -> std::ops::Range<usize> {
        let s = self.hidden * (self.dim_in + 1);
        s..s + self.hidden
    }

    pub fn b2(&self) -> usize {
        self.hidden * (self.dim_in + 2)
    }

    pub fn n_params(&self) -> usize {
        self.b2() + 1
    }
}

/// One hidden tanh layer, logistic output, mean cross-entropy plus weight decay.
#[derive(Debug, Clone)]
pub struct TinyMlp {
    layout: MlpLayout,
    n: usize,
    features: Vec<f64>,
    /// Labels in {0, 1}.
    labels: Vec<f64>,
    heldout_features: Vec<f64>,
    heldout_labels: Vec<f64>,
    l2: f64,
}

impl TinyMlp {
    pub fn layout(&self) -> MlpLayout {
        self.layout
    }

    fn row<'a>(&self, data: &'a [f64], i: usize) -> &'a [f64] {
        let d = self.layout.dim_in;
        &data[i * d..(i + 1) * d]
    }

    /// Output logit and hidden activations for one input.
    fn forward(&self, theta: &[f64], input: &[f64], hidden: &mut [f64]) -> f64 {
        let ly = self.layout;
        let w1 = &theta[ly.w1()];
        let b1 = &theta[ly.b1()];
        let w2 = &theta[ly.w2()];
        let mut z = theta[ly.b2()];
        for j in 0..ly.hidden {
            let pre: f64 = w1[j * ly.dim_in..(j + 1) * ly.dim_in]
                .iter()
                .zip(input)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + b1[j];
            hidden[j] = pre.tanh();
            z += w2[j] * hidden[j];
        }
        z
    }

    /// Mean cross-entropy over the training set, without weight decay.
    pub fn data_loss(&self, theta: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.layout.hidden];
        (0..self.n)
            .map(|i| {
                let z = self.forward(theta, self.row(&self.features, i), &mut hidden);
                softplus(z) - self.labels[i] * z
            })
            .sum::<f64>()
            / self.n as f64
    }

    /// Reverse-mode gradient of one sample's cross-entropy, scaled and added to `out`.
    fn backprop_sample(&self, i: usize, theta: &[f64], scale: f64, hidden: &mut [f64], out: &mut [f64]) {
        let ly = self.layout;
        let input = self.row(&self.features, i);
        let z = self.forward(theta, input, hidden);
        let dz = (sigmoid(z) - self.labels[i]) * scale;
        out[ly.b2()] += dz;
        let w2_off = ly.w2().start;
        let b1_off = ly.b1().start;
        for j in 0..ly.hidden {
            let w2j = theta[w2_off + j];
            out[w2_off + j] += dz * hidden[j];
            let da = dz * w2j * (1.0 - hidden[j] * hidden[j]);
            out[b1_off + j] += da;
            let row = &mut out[j * ly.dim_in..(j + 1) * ly.dim_in];
            for (o, x) in row.iter_mut().zip(input) {
                *o += da * x;
            }
        }
    }
}

impl Objective for TinyMlp {
    fn value(&self, theta: &[f64]) -> f64 {
        self.data_loss(theta) + 0.5 * self.l2 * theta.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient_into(&self, theta: &[f64], out: &mut [f64]) {
        let all: Vec<usize> = (0..self.n).collect();
        self.batch_gradient_into(&all, theta, out);
    }

    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        Some(self)
    }

    fn heldout_error(&self, theta: &[f64]) -> Option<f64> {
        let m = self.heldout_labels.len();
        if m == 0 {
            return None;
        }
        let mut hidden = vec![0.0; self.layout.hidden];
        let wrong = (0..m)
            .filter(|&i| {
                let z = self.forward(theta, self.row(&self.heldout_features, i), &mut hidden);
                let predicted = if z > 0.0 { 1.0 } else { 0.0 };
                predicted != self.heldout_labels[i]
            })
            .count();
        Some(wrong as f64 / m as f64)
    }
}

impl FiniteSum for TinyMlp {
    fn n_samples(&self) -> usize {
        self.n
    }

    fn batch_gradient_into(&self, indices: &[usize], theta: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(theta) {
            *o = self.l2 * t;
        }
        let mut hidden = vec![0.0; self.layout.hidden];
        let scale = 1.0 / indices.len() as f64;
        for &i in indices {
            self.backprop_sample(i, theta, scale, &mut hidden, out);
        }
    }
}

/// Defaults: separation 1.28 (≈10% Bayes error), 1000 held-out samples, weight decay 0.0005.
pub fn make_tiny_mlp(n_samples: usize, dim_in: usize, hidden: usize, seed: u64) -> Result<ProblemSpec> {
    make_tiny_mlp_with(n_samples, dim_in, hidden, seed, 1000, super::DEFAULT_L2, 1.28)
}

pub fn make_tiny_mlp_with(
    n_samples: usize,
    dim_in: usize,
    hidden: usize,
    seed: u64,
    n_heldout: usize,
    l2: f64,
    separation: f64,
) -> Result<ProblemSpec> {
    if hidden == 0 || dim_in == 0 || n_samples == 0 {
        return Err(Error::InvalidConfig(
            "tiny MLP needs n_samples, dim_in and hidden ≥ 1".into(),
        ));
    }
    let layout = MlpLayout { dim_in, hidden };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (features, labels) = gaussian_blobs(n_samples + n_heldout, dim_in, separation, &mut rng);
    let to01 = |y: &f64| if *y > 0.0 { 1.0 } else { 0.0 };
    let split = n_samples * dim_in;
    let mlp = TinyMlp {
        layout,
        n: n_samples,
        features: features[..split].to_vec(),
        labels: labels[..n_samples].iter().map(to01).collect(),
        heldout_features: features[split..].to_vec(),
        heldout_labels: labels[n_samples..].iter().map(to01).collect(),
        l2,
    };

    let mut theta = vec![0.0; layout.n_params()];
    let s1 = 1.0 / (dim_in as f64).sqrt();
    let s2 = 1.0 / (hidden as f64).sqrt();
    for v in &mut theta[layout.w1()] {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = s1 * z;
    }
    for v in &mut theta[layout.w2()] {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = s2 * z;
    }

    ProblemSpec::new(
        format!("mlp-n{n_samples}-in{dim_in}-h{hidden}-seed{seed}"),
        ProblemConstants::new(ConvexityClass::SmoothNonconvex),
        ParamVector::new(theta)?,
        None,
        Arc::new(mlp),
    )
}

#[cfg(test)]
mod tests {
    use super::super::fd;
    use super::*;
    use rand::Rng;

    const DEFAULT_L2_TEST: f64 = 0.0005;

    fn small(l2: f64) -> (TinyMlp, Vec<f64>) {
        let layout = MlpLayout { dim_in: 3, hidden: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (features, labels) = gaussian_blobs(60, 3, 1.28, &mut rng);
        let to01 = |y: &f64| if *y > 0.0 { 1.0 } else { 0.0 };
        let theta = (0..layout.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        (
            TinyMlp {
                layout,
                n: 40,
                features: features[..120].to_vec(),
                labels: labels[..40].iter().map(to01).collect(),
                heldout_features: features[120..].to_vec(),
                heldout_labels: labels[40..].iter().map(to01).collect(),
                l2,
            },
            theta,
        )
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (mlp, _) = small(DEFAULT_L2_TEST);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let theta: Vec<f64> = (0..mlp.layout.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; theta.len()];
            mlp.gradient_into(&theta, &mut g);
            let approx = fd::gradient(&mlp, &theta, 1e-5);
            let err = fd::relative_error(&approx, &g);
            assert!(err <= 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn zero_output_layer_gives_log_two() {
        let (mlp, mut theta) = small(0.0);
        let ly = mlp.layout;
        theta[ly.w2()].iter_mut().for_each(|v| *v = 0.0);
        theta[ly.b2()] = 0.0;
        assert!((mlp.data_loss(&theta) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_samples_leave_loss_and_gradient_unchanged() {
        let (mlp, theta) = small(DEFAULT_L2_TEST);
        let doubled = TinyMlp {
            n: 2 * mlp.n,
            features: [mlp.features.clone(), mlp.features.clone()].concat(),
            labels: [mlp.labels.clone(), mlp.labels.clone()].concat(),
            ..mlp.clone()
        };
        assert!((mlp.value(&theta) - doubled.value(&theta)).abs() < 1e-14);
        let mut g1 = vec![0.0; theta.len()];
        let mut g2 = vec![0.0; theta.len()];
        mlp.gradient_into(&theta, &mut g1);
        doubled.gradient_into(&theta, &mut g2);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn heldout_error_is_a_fraction() {
        let (mlp, theta) = small(0.0);
        let e = mlp.heldout_error(&theta).unwrap();
        assert!((0.0..=1.0).contains(&e));
        // 20 held-out samples: errors are multiples of 1/20.
        assert!(((e * 20.0).round() - e * 20.0).abs() < 1e-12);
    }

    #[test]
    fn spec_layout_and_constants() {
        let p = make_tiny_mlp(100, 20, 16, 0).unwrap();
        assert_eq!(p.dim, 16 * 20 + 16 + 16 + 1);
        assert!(p.constants.l.is_none() && p.constants.g.is_none());
        assert!(p.heldout_error(&p.x0).is_some());
        assert!(make_tiny_mlp(100, 20, 0, 0).is_err());
    }
}
