//! Theorem bounds next to the measured quantities they bound.

use serde::{Deserialize, Serialize};
use sum_core::metrics::Stat;
use sum_core::problems::ProblemConstants;
use sum_core::theory::{bound, BoundInput, Theorem};

use crate::experiment::{ProblemFacts, VariantSummary};

/// Where the `M` used for the `V_t` bound came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MSource {
    Declared,
    /// Largest `‖G_k‖` seen over the variant's runs.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: u8,
    pub bound: Option<f64>,
    /// Mean gap of `x̂_t` for the convex bounds, mean `min_k ‖∇f(x_k)‖²` otherwise.
    pub measured: Option<Stat>,
    pub m_source: Option<MSource>,
    pub error: Option<String>,
}

impl BoundReport {
    /// Whether mean plus `z` standard errors sits at or below the bound.
    pub fn holds(&self, z: f64) -> Option<bool> {
        Some(self.measured?.upper(z) <= self.bound?)
    }

    pub fn line(&self) -> String {
        let fmt = |v: f64| format!("{v:.6e}");
        match (&self.error, self.bound) {
            (Some(e), _) => format!("theorem {}: unavailable ({e})", self.theorem),
            (None, Some(b)) => {
                let measured = self
                    .measured
                    .map(|m| format!("measured mean {} (+2se {})", fmt(m.mean), fmt(m.upper(2.0))))
                    .unwrap_or_else(|| "no measurement".into());
                let verdict = match self.holds(2.0) {
                    Some(true) => " holds",
                    Some(false) => " VIOLATED",
                    None => "",
                };
                format!("theorem {}: bound {}, {measured}{verdict}", self.theorem, fmt(b))
            }
            (None, None) => format!("theorem {}: unavailable", self.theorem),
        }
    }
}

/// Evaluates one theorem for a finished variant.
pub fn report(theorem: Theorem, problem: &ProblemFacts, variant: &VariantSummary) -> BoundReport {
    let measured = match theorem {
        Theorem::One | Theorem::Two => variant.final_gap,
        Theorem::Three | Theorem::Four => variant.min_grad_norm_sq,
    };
    let mut constants: ProblemConstants = problem.constants.clone();
    let mut m_source = None;
    if theorem == Theorem::Two {
        m_source = Some(if constants.m.is_some() {
            MSource::Declared
        } else {
            constants.m = variant.max_draw_norm;
            MSource::Observed
        });
    }
    let result = (|| {
        let f0_gap = problem.f0_gap.ok_or(sum_core::Error::MissingConstant("f_star"))?;
        let dist0_sq = match theorem {
            Theorem::One | Theorem::Two => problem.dist0_sq.ok_or(sum_core::Error::MissingConstant("x_star"))?,
            _ => problem.dist0_sq.unwrap_or(0.0),
        };
        let input = BoundInput {
            f0_gap,
            dist0_sq,
            constants,
            config: variant.config.clone(),
            v_t: variant.v_t.map(|v| v.mean),
        };
        bound(theorem, &input)
    })();
    let (bound, error) = match result {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    BoundReport {
        theorem: theorem.number(),
        bound,
        measured,
        m_source,
        error,
    }
}

pub fn reports(problem: &ProblemFacts, variant: &VariantSummary) -> Vec<BoundReport> {
    Theorem::ALL.iter().map(|&t| report(t, problem, variant)).collect()
}
