//! Test objectives with declared analytic constants.
//!
//! Every problem is an [`Objective`] wrapped in a [`ProblemSpec`] that carries
//! its canonical start, known minimizer (when available), and the constants
//! the convergence bounds consume. Finite-sum problems additionally expose
//! per-sample gradients through [`FiniteSum`] so the minibatch oracle can
//! sample them.

mod abs_loss;
pub mod checks;
mod logreg;
mod mlp;
mod quadratic;
mod softlog;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::ParamVector;

pub use abs_loss::{make_abs_loss, AbsLoss};
pub use logreg::{make_logreg, make_logreg_with, LogReg, DEFAULT_L2};
pub use mlp::{make_tiny_mlp, make_tiny_mlp_with, MlpLayout, TinyMlp};
pub use quadratic::{make_quadratic, make_quadratic_from, Quadratic};
pub use softlog::{make_softlog, SoftLog};

/// Radius of the sup-norm box over which locally valid bounds are declared.
pub const DEFAULT_BOX_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvexityClass {
    NonsmoothConvex,
    SmoothConvex,
    SmoothNonconvex,
}

impl ConvexityClass {
    pub fn is_convex(self) -> bool {
        !matches!(self, ConvexityClass::SmoothNonconvex)
    }
}

/// Analytic constants a problem declares. `delta2` is the stochastic-gradient
/// variance bound; it is filled in by the oracle, not the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Gradient Lipschitz constant.
    pub l: Option<f64>,
    /// Bound on the (sub)gradient norm.
    pub g: Option<f64>,
    /// Almost-sure bound on the stochastic (sub)gradient norm.
    pub m: Option<f64>,
    /// Variance bound, shared by the convex and non-convex bounds.
    pub delta2: Option<f64>,
    pub f_star: Option<f64>,
    pub convexity: ConvexityClass,
    /// When set, `g` is only claimed over `‖x‖∞ ≤ box_radius`.
    pub box_radius: Option<f64>,
}

impl ProblemConstants {
    pub fn new(convexity: ConvexityClass) -> Self {
        Self {
            l: None,
            g: None,
            m: None,
            delta2: None,
            f_star: None,
            convexity,
            box_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: Option<f64>, name: &str, strict: bool| -> Result<()> {
            match v {
                Some(x) if !x.is_finite() || x < 0.0 || (strict && x == 0.0) => Err(
                    Error::InvalidConfig(format!("constant {name} = {x} is not admissible")),
                ),
                _ => Ok(()),
            }
        };
        positive(self.l, "L", true)?;
        positive(self.g, "G", false)?;
        positive(self.m, "M", false)?;
        positive(self.delta2, "delta2", false)?;
        positive(self.box_radius, "box_radius", true)?;
        if let (Some(m), Some(g)) = (self.m, self.g) {
            if m < g {
                return Err(Error::InvalidConfig(format!("M = {m} is below G = {g}")));
            }
        }
        Ok(())
    }

    pub fn require_l(&self) -> Result<f64> {
        self.l.ok_or(Error::MissingConstant("L"))
    }

    pub fn require_g(&self) -> Result<f64> {
        self.g.ok_or(Error::MissingConstant("G"))
    }

    pub fn require_m(&self) -> Result<f64> {
        self.m.ok_or(Error::MissingConstant("M"))
    }

    pub fn require_delta2(&self) -> Result<f64> {
        self.delta2.ok_or(Error::MissingConstant("delta2"))
    }
}

/// A deterministic objective over slices of length `dim`.
pub trait Objective: Send + Sync + fmt::Debug {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes a (sub)gradient at `x` into `out`.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        None
    }

    /// Held-out classification error, for problems that carry an evaluation set.
    fn heldout_error(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Objectives of the form `f(x) = (1/n) Σ_i f_i(x)`.
pub trait FiniteSum {
    fn n_samples(&self) -> usize;

    /// Mean of `∇f_i(x)` over `indices` (repetitions count). `indices` must be
    /// non-empty.
    fn batch_gradient_into(&self, indices: &[usize], x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub constants: ProblemConstants,
    pub x0: ParamVector,
    pub x_star: Option<ParamVector>,
    /// Construction notes, e.g. a regenerated degenerate data set.
    pub notes: Vec<String>,
    objective: Arc<dyn Objective>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        constants: ProblemConstants,
        x0: ParamVector,
        x_star: Option<ParamVector>,
        objective: Arc<dyn Objective>,
    ) -> Result<Self> {
        constants.validate()?;
        let dim = x0.dim();
        if let Some(xs) = &x_star {
            xs.ensure_dim(dim)?;
        }
        Ok(Self {
            name: name.into(),
            dim,
            constants,
            x0,
            x_star,
            notes: Vec::new(),
            objective,
        })
    }

    /// Replaces the canonical start.
    pub fn with_start(mut self, x0: ParamVector) -> Result<Self> {
        x0.ensure_dim(self.dim)?;
        self.x0 = x0;
        Ok(self)
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn value_at(&self, x: &ParamVector) -> Result<f64> {
        x.ensure_dim(self.dim)?;
        let v = self.objective.value(x.as_slice());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("value_at"))
        }
    }

    pub fn full_gradient_at(&self, x: &ParamVector) -> Result<ParamVector> {
        x.ensure_dim(self.dim)?;
        let mut out = ParamVector::zeros(self.dim);
        self.objective.gradient_into(x.as_slice(), out.as_mut_slice());
        out.ensure_finite("full_gradient_at")?;
        Ok(out)
    }

    pub fn heldout_error(&self, x: &ParamVector) -> Option<f64> {
        self.objective.heldout_error(x.as_slice())
    }

    pub fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        self.objective.finite_sum()
    }

    /// `f(x0) − f*`, measured from the actual start.
    pub fn initial_gap(&self) -> Result<f64> {
        let f_star = self.constants.f_star.ok_or(Error::MissingConstant("f_star"))?;
        Ok(self.value_at(&self.x0)? - f_star)
    }

    /// `‖x0 − x*‖²`, measured from the actual start.
    pub fn initial_dist_sq(&self) -> Result<f64> {
        let xs = self.x_star.as_ref().ok_or(Error::MissingConstant("x_star"))?;
        self.x0.distance_sq(xs)
    }

    /// Whether `x` lies inside the declared validity box, if any.
    pub fn in_box(&self, x: &ParamVector) -> bool {
        self.constants
            .box_radius
            .is_none_or(|r| x.norm_inf() <= r)
    }
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite differences, used as an independent gradient oracle.

    use super::Objective;

    pub fn gradient(obj: &dyn Objective, x: &[f64], h: f64) -> Vec<f64> {
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = xp[i];
                xp[i] = orig + h;
                let fp = obj.value(&xp);
                xp[i] = orig - h;
                let fm = obj.value(&xp);
                xp[i] = orig;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        num / den
    }
}
