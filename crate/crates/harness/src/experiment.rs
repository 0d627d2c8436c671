//! Running an experiment: every `(variant, seed)` pair, aggregated per variant.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sum_core::metrics::{aggregate, oscillation_score, AggregateMetrics, RunMetrics, Stat};
use sum_core::optimizer::{run, RunOptions, SumConfig};
use sum_core::oracle::OracleSpec;
use sum_core::problems::{ProblemConstants, ProblemSpec};

use crate::bounds::{reports, BoundReport};
use crate::config::{ExperimentConfig, ResolvedVariant};
use crate::error::{io_err, HarnessError, Result};

pub const SUMMARY_FILE: &str = "summary.json";

/// A validated, ready-to-run experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: ProblemSpec,
    pub oracle: OracleSpec,
    pub variants: Vec<ResolvedVariant>,
    pub seeds: Vec<u64>,
    pub options: RunOptions,
}

/// Problem quantities the bounds need, measured at the actual start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFacts {
    pub name: String,
    pub dim: usize,
    pub f0_gap: Option<f64>,
    pub dist0_sq: Option<f64>,
    /// Declared constants with the oracle's `δ²` (and `M`, if any) filled in.
    pub constants: ProblemConstants,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub label: String,
    pub s: f64,
    pub beta: f64,
    pub config: SumConfig,
    pub seeds: usize,
    pub diverged: usize,
    pub left_box: usize,
    /// `f(x̂_t) − f*` over non-divergent runs.
    pub final_gap: Option<Stat>,
    /// `f` at the last iterate.
    pub final_f: Option<Stat>,
    pub min_grad_norm_sq: Option<Stat>,
    pub v_t: Option<Stat>,
    /// Largest `‖G_k‖` over all non-divergent runs.
    pub max_draw_norm: Option<f64>,
    /// Oscillation of the held-out error series, when the problem has one.
    pub oscillation: Option<Stat>,
    pub bounds: Vec<BoundReport>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub config: ExperimentConfig,
    pub problem: ProblemFacts,
    pub variants: Vec<VariantSummary>,
}

impl SummaryDoc {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json { path, source })
    }

    pub fn table(&self) -> String {
        let opt = |s: &Option<Stat>| match s {
            Some(s) => format!("{:.4e}±{:.1e}", s.mean, s.se.unwrap_or(0.0)),
            None => "-".into(),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<36} {:>6} {:>4} {:>20} {:>20} {:>20} {:>20}",
            "variant", "seeds", "div", "final_gap", "min_grad_norm_sq", "final_f", "oscillation"
        );
        for v in &self.variants {
            let _ = writeln!(
                out,
                "{:<36} {:>6} {:>4} {:>20} {:>20} {:>20} {:>20}",
                v.label,
                v.seeds,
                v.diverged,
                opt(&v.final_gap),
                opt(&v.min_grad_norm_sq),
                opt(&v.final_f),
                opt(&v.oscillation)
            );
            for b in v.bounds.iter().filter(|b| b.bound.is_some()) {
                let _ = writeln!(out, "    {}", b.line());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: ResolvedVariant,
    pub runs: Vec<RunMetrics>,
    pub aggregate: AggregateMetrics,
    pub summary: VariantSummary,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub problem: ProblemFacts,
    pub config: ExperimentConfig,
    pub variants: Vec<VariantOutcome>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let (problem, oracle, variants) = config.resolve()?;
        Ok(Self {
            seeds: config.seeds.seeds(),
            options: config.run_options(),
            config,
            problem,
            oracle,
            variants,
        })
    }

    pub fn facts(&self) -> ProblemFacts {
        ProblemFacts {
            name: self.problem.name.clone(),
            dim: self.problem.dim,
            f0_gap: self.problem.initial_gap().ok(),
            dist0_sq: self.problem.initial_dist_sq().ok(),
            constants: self.oracle.declare_constants(&self.problem.constants),
            notes: self.problem.notes.clone(),
        }
    }

    /// Runs everything on `jobs` threads (all cores when `None`, in-thread
    /// when 1). Results are gathered in `(variant, seed)` order regardless.
    pub fn execute(&self, jobs: Option<usize>) -> Result<ExperimentOutcome> {
        let tasks: Vec<(usize, u64)> = (0..self.variants.len())
            .flat_map(|v| self.seeds.iter().map(move |&s| (v, s)))
            .collect();
        let one = |&(v, seed): &(usize, u64)| {
            run(&self.problem, &self.oracle.with_seed(seed), &self.variants[v].config, self.options)
        };
        let results: Vec<sum_core::Result<RunMetrics>> = match jobs {
            Some(1) => tasks.iter().map(one).collect(),
            _ => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs.unwrap_or(0))
                    .build()
                    .map_err(|e| HarnessError::Pool(e.to_string()))?;
                pool.install(|| tasks.par_iter().map(one).collect())
            }
        };
        let mut results = results.into_iter();
        let facts = self.facts();
        let mut variants = Vec::with_capacity(self.variants.len());
        for variant in &self.variants {
            let runs = results
                .by_ref()
                .take(self.seeds.len())
                .collect::<sum_core::Result<Vec<_>>>()?;
            let aggregate = aggregate(&runs)?;
            let mut summary = summarize(&self.problem, variant, &runs);
            summary.bounds = reports(&facts, &summary);
            variants.push(VariantOutcome {
                variant: variant.clone(),
                runs,
                aggregate,
                summary,
            });
        }
        Ok(ExperimentOutcome {
            problem: facts,
            config: self.config.clone(),
            variants,
        })
    }
}

fn summarize(problem: &ProblemSpec, variant: &ResolvedVariant, runs: &[RunMetrics]) -> VariantSummary {
    let kept: Vec<&RunMetrics> = runs.iter().filter(|r| r.summary.diverged_at.is_none()).collect();
    let stat = |f: &dyn Fn(&RunMetrics) -> Option<f64>| Stat::from_samples(&kept.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    VariantSummary {
        label: variant.label.clone(),
        s: variant.s,
        beta: variant.beta,
        config: variant.config.clone(),
        seeds: runs.len(),
        diverged: runs.len() - kept.len(),
        left_box: runs.iter().filter(|r| r.summary.left_box_at.is_some()).count(),
        final_gap: stat(&|r| r.summary.final_gap),
        final_f: stat(&|r| problem.value_at(&r.summary.final_x).ok()),
        min_grad_norm_sq: stat(&|r| Some(r.summary.min_grad_norm_sq).filter(|v| v.is_finite())),
        v_t: stat(&|r| Some(r.summary.v_t)),
        max_draw_norm: kept.iter().map(|r| r.summary.max_draw_norm).reduce(f64::max),
        oscillation: stat(&|r| oscillation_score(&r.heldout_series()).ok()),
        bounds: Vec::new(),
    }
}

impl ExperimentOutcome {
    pub fn summary(&self) -> SummaryDoc {
        SummaryDoc {
            config: self.config.clone(),
            problem: self.problem.clone(),
            variants: self.variants.iter().map(|v| v.summary.clone()).collect(),
        }
    }

    /// Writes one CSV per run, one aggregate CSV per variant and
    /// `summary.json`; returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut written = Vec::new();
        let mut put = |name: String, body: &str| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io_err(&path))?;
            written.push(path);
            Ok(())
        };
        for v in &self.variants {
            for r in &v.runs {
                put(format!("run_{}_seed{}.csv", v.variant.label, r.summary.seed), &r.to_csv())?;
            }
            put(format!("agg_{}.csv", v.variant.label), &v.aggregate.to_csv())?;
        }
        let json = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        put(SUMMARY_FILE.into(), &json)?;
        Ok(written)
    }
}

/// Validates `config`, runs it and writes artifacts to `out_dir`.
pub fn run_experiment(config: ExperimentConfig, out_dir: &Path, jobs: Option<usize>) -> Result<ExperimentOutcome> {
    let outcome = Experiment::new(config)?.execute(jobs)?;
    outcome.write(out_dir)?;
    Ok(outcome)
}
