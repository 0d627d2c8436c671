//! TOML experiment configuration.
//!
//! ```toml
//! horizon = 10000
//! record_every = 100
//!
//! [problem]
//! kind = "abs-loss"
//! dim = 10
//!
//! [oracle]
//! kind = "additive-gaussian"
//! noise_std = 1.0
//!
//! [schedule]
//! kind = "theorem1"
//! c = 1.0
//!
//! [seeds]
//! count = 50
//! base = 0
//!
//! [[variants]]
//! s = 0
//! beta = 0.9
//!
//! [[variants]]
//! s = "gd"
//! beta = 0.9
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sum_core::optimizer::{sgd_equivalent_s, AlphaSchedule, RunOptions, SumConfig};
use sum_core::oracle::{OracleKind, OracleSpec};
use sum_core::problems::{
    make_abs_loss, make_logreg_with, make_quadratic, make_softlog, make_tiny_mlp_with, ProblemSpec, DEFAULT_L2,
};

use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemConfig,
    #[serde(default = "deterministic")]
    pub oracle: OracleKind,
    pub variants: Vec<VariantConfig>,
    pub schedule: ScheduleConfig,
    /// Number of steps, `t + 1`.
    pub horizon: usize,
    #[serde(default)]
    pub seeds: SeedsConfig,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub grad_norm_every_step: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn deterministic() -> OracleKind {
    OracleKind::Deterministic
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn unit() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Quadratic {
        dim: usize,
        #[serde(default = "default_condition")]
        condition_number: f64,
        #[serde(default)]
        seed: u64,
    },
    AbsLoss {
        dim: usize,
    },
    Softlog {
        dim: usize,
    },
    Logreg {
        n_samples: usize,
        dim: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "unit")]
        separation: f64,
    },
    TinyMlp {
        n_samples: usize,
        dim_in: usize,
        hidden: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_heldout")]
        n_heldout: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_separation")]
        separation: f64,
    },
}

fn default_condition() -> f64 {
    10.0
}

fn default_l2() -> f64 {
    DEFAULT_L2
}

fn default_heldout() -> usize {
    1000
}

fn default_separation() -> f64 {
    1.28
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        let p = match *self {
            ProblemConfig::Quadratic {
                dim,
                condition_number,
                seed,
            } => make_quadratic(dim, condition_number, seed)?,
            ProblemConfig::AbsLoss { dim } => make_abs_loss(dim)?,
            ProblemConfig::Softlog { dim } => make_softlog(dim)?,
            ProblemConfig::Logreg {
                n_samples,
                dim,
                seed,
                l2,
                separation,
            } => make_logreg_with(n_samples, dim, seed, l2, separation)?,
            ProblemConfig::TinyMlp {
                n_samples,
                dim_in,
                hidden,
                seed,
                n_heldout,
                l2,
                separation,
            } => make_tiny_mlp_with(n_samples, dim_in, hidden, seed, n_heldout, l2, separation)?,
        };
        Ok(p)
    }
}

/// The free parameter `s`: a number, or `"gd"` for `1/(1−β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SValue {
    Number(f64),
    Named(String),
}

impl SValue {
    pub fn resolve(&self, beta: f64) -> Result<f64> {
        match self {
            SValue::Number(s) => Ok(*s),
            SValue::Named(n) if matches!(n.as_str(), "gd" | "sg") => Ok(sgd_equivalent_s(beta)),
            SValue::Named(n) => Err(HarnessError::Config(format!(
                "s must be a number or \"gd\", got {n:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub s: SValue,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleConfig {
    Constant {
        alpha: f64,
    },
    Theorem1 {
        #[serde(default = "unit")]
        c: f64,
    },
    /// `l` defaults to the problem's declared `L`.
    Theorem3 {
        #[serde(default = "unit")]
        c: f64,
        #[serde(default)]
        l: Option<f64>,
    },
    Theorem4 {
        #[serde(default = "unit")]
        c: f64,
        #[serde(default)]
        l: Option<f64>,
    },
    /// Epochs default to one pass over the data for a minibatch oracle and one
    /// iteration otherwise; decays default to 50% and 75% of the run.
    StepDecay {
        alpha0: f64,
        #[serde(default = "tenth")]
        factor: f64,
        #[serde(default)]
        epochs: Option<Vec<usize>>,
        #[serde(default)]
        epoch_length: Option<usize>,
    },
}

impl ScheduleConfig {
    pub fn resolve(&self, problem: &ProblemSpec, oracle: &OracleKind, horizon: usize) -> Result<AlphaSchedule> {
        let l = |l: Option<f64>| -> Result<f64> {
            l.or(problem.constants.l).ok_or_else(|| {
                HarnessError::Config(format!(
                    "schedule needs L but problem {} declares none; set schedule.l",
                    problem.name
                ))
            })
        };
        Ok(match self {
            ScheduleConfig::Constant { alpha } => AlphaSchedule::Constant { alpha: *alpha },
            ScheduleConfig::Theorem1 { c } => AlphaSchedule::Theorem1 { c: *c },
            ScheduleConfig::Theorem3 { c, l: lv } => AlphaSchedule::Theorem3 { c: *c, l: l(*lv)? },
            ScheduleConfig::Theorem4 { c, l: lv } => AlphaSchedule::Theorem4 { c: *c, l: l(*lv)? },
            ScheduleConfig::StepDecay {
                alpha0,
                factor,
                epochs,
                epoch_length,
            } => {
                let epoch_length = epoch_length.unwrap_or_else(|| match (oracle, problem.finite_sum()) {
                    (OracleKind::Minibatch { batch_size }, Some(fs)) => fs.n_samples().div_ceil(*batch_size).max(1),
                    _ => 1,
                });
                let epochs = epochs.clone().unwrap_or_else(|| {
                    let total = horizon.div_ceil(epoch_length.max(1));
                    let mut e = vec![total / 2, 3 * total / 4];
                    e.retain(|&x| x > 0);
                    e.dedup();
                    e
                });
                AlphaSchedule::StepDecay {
                    alpha0: *alpha0,
                    factor: *factor,
                    epochs,
                    epoch_length,
                }
            }
        })
    }

    /// Same schedule with its base step size replaced, for sweeps.
    pub fn with_alpha(&self, alpha: f64) -> Result<ScheduleConfig> {
        match self {
            ScheduleConfig::StepDecay {
                factor,
                epochs,
                epoch_length,
                ..
            } => Ok(ScheduleConfig::StepDecay {
                alpha0: alpha,
                factor: *factor,
                epochs: epochs.clone(),
                epoch_length: *epoch_length,
            }),
            ScheduleConfig::Constant { .. } => Ok(ScheduleConfig::Constant { alpha }),
            _ => Err(HarnessError::Config(
                "an α grid needs a constant or step-decay schedule".into(),
            )),
        }
    }
}

/// Either an explicit list or `count` seeds starting at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedsConfig {
    List { list: Vec<u64> },
    Count {
        count: usize,
        #[serde(default)]
        base: u64,
    },
}

impl Default for SeedsConfig {
    fn default() -> Self {
        SeedsConfig::Count { count: 1, base: 0 }
    }
}

impl SeedsConfig {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedsConfig::List { list } => list.clone(),
            SeedsConfig::Count { count, base } => (0..*count as u64).map(|i| base.wrapping_add(i)).collect(),
        }
    }
}

/// A variant with `s` resolved and its optimizer config built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedVariant {
    pub label: String,
    pub s: f64,
    pub beta: f64,
    pub config: SumConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|source| HarnessError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            record_every: self.record_every,
            grad_norm_every_step: self.grad_norm_every_step,
        }
    }

    pub fn with_seed_count(mut self, count: usize, base: Option<u64>) -> Self {
        let base = base.unwrap_or(match &self.seeds {
            SeedsConfig::Count { base, .. } => *base,
            SeedsConfig::List { list } => list.first().copied().unwrap_or(0),
        });
        self.seeds = SeedsConfig::Count { count, base };
        self
    }

    pub fn with_base_seed(mut self, base: u64) -> Self {
        self.seeds = match self.seeds {
            SeedsConfig::Count { count, .. } => SeedsConfig::Count { count, base },
            SeedsConfig::List { list } => SeedsConfig::Count { count: list.len(), base },
        };
        self
    }

    /// Checks every invariant and builds the problem, oracle template and
    /// variants. Nothing is run.
    pub fn resolve(&self) -> Result<(ProblemSpec, OracleSpec, Vec<ResolvedVariant>)> {
        if self.variants.is_empty() {
            return Err(HarnessError::Config("at least one variant is required".into()));
        }
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be ≥ 1".into()));
        }
        if self.record_every == 0 {
            return Err(HarnessError::Config("record_every must be ≥ 1".into()));
        }
        if self.seeds.seeds().is_empty() {
            return Err(HarnessError::Config("seed set is empty".into()));
        }
        let problem = self.problem.build()?;
        let oracle = OracleSpec::new(self.oracle, 0)?;
        if matches!(self.oracle, OracleKind::Minibatch { .. }) && problem.finite_sum().is_none() {
            return Err(HarnessError::Config(format!(
                "problem {} has no samples for a minibatch oracle",
                problem.name
            )));
        }
        let schedule = self.schedule.resolve(&problem, &self.oracle, self.horizon)?;
        let mut variants: Vec<ResolvedVariant> = Vec::new();
        for v in &self.variants {
            let s = v.s.resolve(v.beta)?;
            let config = SumConfig::new(v.beta, s, schedule.clone(), self.horizon)?;
            let label = format!("{}_s{}_b{}_{}", problem.name, tag(s), tag(v.beta), schedule.label());
            if variants.iter().any(|o| o.label == label) {
                return Err(HarnessError::Config(format!("duplicate variant {label}")));
            }
            variants.push(ResolvedVariant {
                label,
                s,
                beta: v.beta,
                config,
            });
        }
        Ok((problem, oracle, variants))
    }
}

/// Compact decimal for file names: at most six decimals, trailing zeros cut.
pub fn tag(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        horizon = 5
        [problem]
        kind = "softlog"
        dim = 3
        [schedule]
        kind = "constant"
        alpha = 0.1
        [[variants]]
        s = 1
        beta = 0.9
    "#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.oracle, OracleKind::Deterministic);
        assert_eq!(cfg.seeds.seeds(), vec![0]);
        assert_eq!(cfg.record_every, 1);
        let (p, _, v) = cfg.resolve().unwrap();
        assert_eq!(p.dim, 3);
        assert_eq!(v[0].label, "softlog-d3_s1_b0.9_const0.1");
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn gd_alias_resolves() {
        assert_eq!(SValue::Named("gd".into()).resolve(0.9).unwrap(), sgd_equivalent_s(0.9));
        assert!(SValue::Named("nag".into()).resolve(0.9).is_err());
        assert_eq!(tag(sgd_equivalent_s(0.9)), "10");
        assert_eq!(tag(0.5), "0.5");
        assert_eq!(tag(0.0), "0");
    }

    #[test]
    fn seeds_forms() {
        let list: SeedsConfig = toml::from_str("list = [4, 2]").unwrap();
        assert_eq!(list.seeds(), vec![4, 2]);
        let count: SeedsConfig = toml::from_str("count = 3\nbase = 10").unwrap();
        assert_eq!(count.seeds(), vec![10, 11, 12]);
    }

    #[test]
    fn rejects_bad_configs() {
        let no_variants = MINIMAL.replace("[[variants]]\n        s = 1\n        beta = 0.9", "");
        let cfg = ExperimentConfig::from_toml(&format!("variants = []\n{no_variants}")).unwrap();
        assert!(cfg.resolve().is_err());
        let bad_beta = ExperimentConfig::from_toml(&MINIMAL.replace("beta = 0.9", "beta = 1.0")).unwrap();
        assert!(bad_beta.resolve().is_err());
        let zero = ExperimentConfig::from_toml(&MINIMAL.replace("horizon = 5", "horizon = 0")).unwrap();
        assert!(zero.resolve().is_err());
        assert!(ExperimentConfig::from_toml(&format!("bogus = 1\n{MINIMAL}")).is_err());
        let minibatch = MINIMAL.replace("[schedule]", "[oracle]\nkind = \"minibatch\"\nbatch_size = 4\n[schedule]");
        assert!(ExperimentConfig::from_toml(&minibatch).unwrap().resolve().is_err());
    }

    #[test]
    fn step_decay_defaults_follow_data_passes() {
        let text = r#"
            horizon = 160
            [problem]
            kind = "logreg"
            n_samples = 100
            dim = 3
            [oracle]
            kind = "minibatch"
            batch_size = 10
            [schedule]
            kind = "step-decay"
            alpha0 = 0.1
            [[variants]]
            s = 0
            beta = 0.9
        "#;
        let (_, _, v) = ExperimentConfig::from_toml(text).unwrap().resolve().unwrap();
        assert_eq!(
            v[0].config.schedule,
            AlphaSchedule::StepDecay {
                alpha0: 0.1,
                factor: 0.1,
                epochs: vec![8, 12],
                epoch_length: 10
            }
        );
    }

    #[test]
    fn theorem3_takes_declared_l() {
        let text = MINIMAL.replace("kind = \"constant\"\n        alpha = 0.1", "kind = \"theorem3\"");
        let (_, _, v) = ExperimentConfig::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(v[0].config.schedule, AlphaSchedule::Theorem3 { c: 1.0, l: 2.0 });
    }
}
