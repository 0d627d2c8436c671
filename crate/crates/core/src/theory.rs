//! Right-hand sides of the convergence bounds and their step-size rules.
//!
//! All bounds take `t + 1 = config.horizon` and the step constant `C` from the
//! run's schedule. A constant schedule `α` is read as `C = α√(t+1)`, which is
//! the same prescription whenever `α` does not exceed the theorem's cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{AlphaSchedule, SumConfig};
use crate::problems::ProblemConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// Convex, bounded subgradients and variance, `α = C/√(t+1)`.
    One,
    /// Convex, stochastic subgradients bounded by `M`, `sβ ≥ 1/2`.
    Two,
    /// Smooth non-convex, one shared step size.
    Three,
    /// Smooth non-convex, per-variant step-size cap.
    Four,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [Theorem::One, Theorem::Two, Theorem::Three, Theorem::Four];

    pub fn number(self) -> u8 {
        match self {
            Theorem::One => 1,
            Theorem::Two => 2,
            Theorem::Three => 3,
            Theorem::Four => 4,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Theorem::One),
            2 => Ok(Theorem::Two),
            3 => Ok(Theorem::Three),
            4 => Ok(Theorem::Four),
            _ => Err(Error::InvalidConfig(format!("no theorem {n}; expected 1-4"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    /// `f(x_0) − f*`.
    pub f0_gap: f64,
    /// `‖x_0 − x*‖²`.
    pub dist0_sq: f64,
    pub constants: ProblemConstants,
    pub config: SumConfig,
    /// Measured variational term, for the `M`-bounded convex bound.
    pub v_t: Option<f64>,
}

impl BoundInput {
    pub fn t(&self) -> usize {
        self.config.horizon - 1
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("f0_gap", self.f0_gap), ("dist0_sq", self.dist0_sq)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Precondition(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if let Some(v) = self.v_t {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Precondition(format!("V_t must be finite and ≥ 0, got {v}")));
            }
        }
        self.config.validate()
    }

    fn require_convex(&self, theorem: Theorem) -> Result<()> {
        if self.constants.convexity.is_convex() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "theorem {} requires a convex objective",
                theorem.number()
            )))
        }
    }

    /// `C` implied by the run's schedule, checked against the theorem's rule.
    fn step_constant(&self, theorem: Theorem) -> Result<f64> {
        let horizon = self.config.horizon;
        let (beta, s) = (self.config.beta, self.config.s);
        let c = match (&self.config.schedule, theorem) {
            (AlphaSchedule::Theorem1 { c }, Theorem::One) => *c,
            (AlphaSchedule::Theorem3 { c, l }, Theorem::Three) | (AlphaSchedule::Theorem4 { c, l }, Theorem::Four) => {
                if Some(*l) != self.constants.l {
                    return Err(Error::Precondition(format!(
                        "schedule L = {l} differs from the declared L = {:?}",
                        self.constants.l
                    )));
                }
                *c
            }
            (AlphaSchedule::Constant { alpha }, _) => alpha * (horizon as f64).sqrt(),
            (schedule, _) => {
                return Err(Error::Precondition(format!(
                    "schedule {} does not match theorem {}",
                    schedule.label(),
                    theorem.number()
                )))
            }
        };
        let prescribed = recommend_alpha(theorem, &self.constants, beta, s, c, self.t())?;
        let used = self.config.alpha(0);
        if (prescribed - used).abs() > 1e-12 * used {
            return Err(Error::Precondition(format!(
                "step size {used} is not the theorem {} prescription {prescribed}",
                theorem.number()
            )));
        }
        Ok(c)
    }
}

/// The step size each theorem prescribes for horizon `t + 1`.
pub fn recommend_alpha(theorem: Theorem, constants: &ProblemConstants, beta: f64, s: f64, c: f64, t: usize) -> Result<f64> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::Precondition(format!("C must be positive, got {c}")));
    }
    let horizon = t + 1;
    let schedule = match theorem {
        Theorem::One => AlphaSchedule::Theorem1 { c },
        Theorem::Three => AlphaSchedule::Theorem3 { c, l: constants.require_l()? },
        Theorem::Four => AlphaSchedule::Theorem4 { c, l: constants.require_l()? },
        Theorem::Two => {
            return Err(Error::Precondition(
                "theorem 2 leaves α free; pick it with the theorem 1 rule".into(),
            ))
        }
    };
    Ok(schedule.alpha(0, beta, s, horizon))
}

pub fn bound_thm1(input: &BoundInput) -> Result<f64> {
    input.validate()?;
    input.require_convex(Theorem::One)?;
    let g = input.constants.require_g()?;
    let delta2 = input.constants.require_delta2()?;
    let c = input.step_constant(Theorem::One)?;
    let (beta, s) = (input.config.beta, input.config.s);
    let tp1 = input.config.horizon as f64;
    let momentum = beta * input.f0_gap / ((1.0 - beta) * tp1);
    let distance = (1.0 - beta) * input.dist0_sq / (2.0 * c * tp1.sqrt());
    let noise = c * (1.0 + 2.0 * s * beta) * (g * g + delta2) / (2.0 * (1.0 - beta) * tp1.sqrt());
    Ok(momentum + distance + noise)
}

pub fn bound_thm2(input: &BoundInput) -> Result<f64> {
    input.validate()?;
    input.require_convex(Theorem::Two)?;
    let (beta, s) = (input.config.beta, input.config.s);
    if s * beta < 0.5 {
        return Err(Error::Precondition(format!(
            "theorem 2 requires sβ ≥ 1/2, got sβ = {}",
            s * beta
        )));
    }
    if !input.config.schedule.is_constant() {
        return Err(Error::Precondition("theorem 2 requires a constant step size".into()));
    }
    let m = input.constants.require_m()?;
    let v_t = input.v_t.ok_or(Error::MissingConstant("V_t"))?;
    let alpha = input.config.alpha(0);
    let tp1 = input.config.horizon as f64;
    let momentum = beta * input.f0_gap / ((1.0 - beta) * tp1);
    let distance = (1.0 - beta) * input.dist0_sq / (2.0 * alpha * tp1);
    let variation = s * alpha * beta * m * v_t / ((1.0 - beta) * tp1);
    Ok(momentum + distance + variation)
}

/// `2M(t+1)`, the largest `V_t` can be when every `‖G_k‖ ≤ M`.
pub fn worst_case_variation(m: f64, t: usize) -> f64 {
    2.0 * m * (t + 1) as f64
}

struct SmoothTerms {
    l: f64,
    g2: f64,
    sigma2: f64,
    c: f64,
    beta: f64,
    s: f64,
    tp1: f64,
}

impl SmoothTerms {
    fn new(input: &BoundInput, theorem: Theorem) -> Result<Self> {
        input.validate()?;
        let l = input.constants.require_l()?;
        let g = input.constants.require_g()?;
        let sigma2 = input.constants.require_delta2()?;
        let c = input.step_constant(theorem)?;
        Ok(Self {
            l,
            g2: g * g,
            sigma2,
            c,
            beta: input.config.beta,
            s: input.config.s,
            tp1: input.config.horizon as f64,
        })
    }

    fn assemble(&self, f0_gap: f64, cap_factor: f64, momentum_coef: f64) -> f64 {
        let one_m = 1.0 - self.beta;
        let descent = 2.0 * f0_gap * one_m / self.tp1
            * (2.0 * self.l * cap_factor / one_m).max(self.tp1.sqrt() / self.c);
        let numer = self.l * self.beta * self.beta * momentum_coef * (self.g2 + self.sigma2)
            + self.l * self.sigma2 * one_m * one_m;
        descent + self.c / self.tp1.sqrt() * numer / one_m.powi(3)
    }
}

pub fn bound_thm3(input: &BoundInput) -> Result<f64> {
    let t = SmoothTerms::new(input, Theorem::Three)?;
    let m = (1.0 - t.beta) * t.s - 1.0;
    Ok(t.assemble(input.f0_gap, 1.0, m * m))
}

pub fn bound_thm4(input: &BoundInput) -> Result<f64> {
    let t = SmoothTerms::new(input, Theorem::Four)?;
    let m = (1.0 - t.beta) * t.s - 1.0;
    Ok(t.assemble(input.f0_gap, 1.0 + m * m, 1.0))
}

pub fn bound(theorem: Theorem, input: &BoundInput) -> Result<f64> {
    match theorem {
        Theorem::One => bound_thm1(input),
        Theorem::Two => bound_thm2(input),
        Theorem::Three => bound_thm3(input),
        Theorem::Four => bound_thm4(input),
    }
}
