//! Run measurement and across-seed aggregation.
//!
//! Rows are measured with the exact full gradient; the stochastic draw only
//! feeds the variational term `V_k = Σ_{j≤k} ‖G_j − G_{j−1}‖` (with
//! `G_{−1} = 0`). Recording reads the optimizer state and never writes it.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::SumState;
use crate::problems::ProblemSpec;
use crate::vector::ParamVector;

/// Metric columns, in CSV order after `k`.
pub const COLUMNS: [&str; 7] = [
    "f_x",
    "gap_avg",
    "grad_norm_sq",
    "min_grad_norm_sq",
    "v_k",
    "heldout_error",
    "alpha",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub k: usize,
    pub f_x: f64,
    /// `f(x̂_k) − f*`, when `f*` is known.
    pub gap_avg: Option<f64>,
    pub grad_norm_sq: f64,
    pub min_grad_norm_sq: f64,
    pub v_k: f64,
    pub heldout_error: Option<f64>,
    pub alpha: f64,
}

impl MetricRow {
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            Some(self.f_x),
            self.gap_avg,
            Some(self.grad_norm_sq),
            Some(self.min_grad_norm_sq),
            Some(self.v_k),
            self.heldout_error,
            Some(self.alpha),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// Completed steps.
    pub steps: usize,
    /// Index of the first divergent iterate.
    pub diverged_at: Option<usize>,
    /// Index of the first iterate outside the problem's validity box.
    pub left_box_at: Option<usize>,
    /// Last iterate reached.
    pub final_x: ParamVector,
    /// `x̂_t`, the mean of the iterates at which gradients were drawn.
    pub averaged_iterate: ParamVector,
    /// `f(x̂_t) − f*`.
    pub final_gap: Option<f64>,
    pub min_grad_norm_sq: f64,
    pub v_t: f64,
    /// Largest observed `‖G_k‖`.
    pub max_draw_norm: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn is_valid(&self) -> bool {
        self.diverged_at.is_none() && self.left_box_at.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rows: Vec<MetricRow>,
    pub summary: RunSummary,
}

impl RunMetrics {
    pub fn heldout_series(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.heldout_error).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = csv_header(&["k"], &COLUMNS.iter().map(|c| c.to_string()).collect::<Vec<_>>());
        for row in &self.rows {
            let _ = write!(out, "{}", row.k);
            for v in row.values() {
                out.push(',');
                push_opt(&mut out, v);
            }
            out.push('\n');
        }
        out
    }
}

/// Incremental builder for [`RunMetrics`].
#[derive(Debug)]
pub struct MetricsRecorder<'a> {
    problem: &'a ProblemSpec,
    seed: u64,
    rows: Vec<MetricRow>,
    v_sum: f64,
    prev_draw: Vec<f64>,
    max_draw_norm: f64,
    min_grad_sq: f64,
    averaged_iterate: Option<ParamVector>,
    diverged_at: Option<usize>,
    left_box_at: Option<usize>,
}

impl<'a> MetricsRecorder<'a> {
    pub fn new(problem: &'a ProblemSpec, seed: u64) -> Self {
        Self {
            problem,
            seed,
            rows: Vec::new(),
            v_sum: 0.0,
            prev_draw: vec![0.0; problem.dim],
            max_draw_norm: 0.0,
            min_grad_sq: f64::INFINITY,
            averaged_iterate: None,
            diverged_at: None,
            left_box_at: None,
        }
    }

    /// Adds `‖G_k − G_{k−1}‖` to `V`.
    pub fn observe_draw(&mut self, gradient: &ParamVector) {
        let mut diff = 0.0;
        for (p, g) in self.prev_draw.iter_mut().zip(gradient.iter()) {
            diff += (g - *p) * (g - *p);
            *p = *g;
        }
        self.v_sum += diff.sqrt();
        self.max_draw_norm = self.max_draw_norm.max(gradient.norm2());
    }

    /// Updates the running minimum of `‖∇f(x)‖²` and returns the value at `x`.
    pub fn observe_grad_norm(&mut self, x: &ParamVector) -> Result<f64> {
        let g2 = self.problem.full_gradient_at(x)?.norm2_sq();
        self.min_grad_sq = self.min_grad_sq.min(g2);
        Ok(g2)
    }

    /// Appends one row for the current iterate.
    pub fn record(&mut self, state: &SumState, alpha: f64) -> Result<()> {
        let grad_norm_sq = self.observe_grad_norm(&state.x)?;
        let gap_avg = match self.problem.constants.f_star {
            Some(f_star) => Some(self.problem.value_at(&state.avg_x)? - f_star),
            None => None,
        };
        self.rows.push(MetricRow {
            k: state.k,
            f_x: self.problem.value_at(&state.x)?,
            gap_avg,
            grad_norm_sq,
            min_grad_norm_sq: self.min_grad_sq,
            v_k: self.v_sum,
            heldout_error: self.problem.heldout_error(&state.x),
            alpha,
        });
        Ok(())
    }

    pub fn set_averaged_iterate(&mut self, avg: ParamVector) {
        self.averaged_iterate = Some(avg);
    }

    pub fn mark_diverged(&mut self, k: usize) {
        self.diverged_at.get_or_insert(k);
    }

    pub fn mark_left_box(&mut self, k: usize) {
        self.left_box_at.get_or_insert(k);
    }

    pub fn finish(self, state: &SumState, wall_time: Duration) -> RunMetrics {
        let averaged_iterate = self.averaged_iterate.unwrap_or_else(|| state.avg_x.clone());
        let final_gap = self
            .problem
            .constants
            .f_star
            .and_then(|f| self.problem.value_at(&averaged_iterate).ok().map(|v| v - f));
        RunMetrics {
            rows: self.rows,
            summary: RunSummary {
                seed: self.seed,
                steps: state.k,
                diverged_at: self.diverged_at,
                left_box_at: self.left_box_at,
                final_x: state.x.clone(),
                averaged_iterate,
                final_gap,
                min_grad_norm_sq: self.min_grad_sq,
                v_t: self.v_sum,
                max_draw_norm: self.max_draw_norm,
                wall_time,
            },
        }
    }
}

/// Mean absolute successive difference, `(1/(n−1)) Σ |s_{i+1} − s_i|`.
pub fn oscillation_score(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Precondition("oscillation_score needs at least 2 values".into()));
    }
    let total: f64 = series.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (series.len() - 1) as f64)
}

/// Sample mean with standard error; the error needs at least two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn from_samples(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(Stat { mean, se, n })
    }

    /// `mean + z·se`, or the mean when no error is available.
    pub fn upper(&self, z: f64) -> f64 {
        self.mean + z * self.se.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: usize,
    /// Runs contributing to this row.
    pub n: usize,
    pub stats: [Option<Stat>; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub rows: Vec<AggregateRow>,
    /// Runs supplied, including divergent ones.
    pub n_runs: usize,
    pub n_diverged: usize,
}

impl AggregateMetrics {
    pub fn seed_count(&self) -> usize {
        self.n_runs - self.n_diverged
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<Stat>>> {
        let idx = COLUMNS.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r.stats[idx]).collect())
    }

    pub fn to_csv(&self) -> String {
        let cols: Vec<String> = COLUMNS
            .iter()
            .flat_map(|c| [format!("{c}_mean"), format!("{c}_se")])
            .collect();
        let mut out = csv_header(&["k", "n"], &cols);
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.k, row.n);
            for stat in &row.stats {
                out.push(',');
                push_opt(&mut out, stat.map(|s| s.mean));
                out.push(',');
                push_opt(&mut out, stat.and_then(|s| s.se));
            }
            out.push('\n');
        }
        out
    }
}

/// Columnwise mean and standard error over non-divergent runs, which must
/// share the same recording grid.
pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateMetrics> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("aggregate needs at least one run"));
    }
    let kept: Vec<&RunMetrics> = runs.iter().filter(|r| r.summary.diverged_at.is_none()).collect();
    let n_diverged = runs.len() - kept.len();
    let Some(first) = kept.first() else {
        return Ok(AggregateMetrics {
            rows: Vec::new(),
            n_runs: runs.len(),
            n_diverged,
        });
    };
    let grid: Vec<usize> = first.rows.iter().map(|r| r.k).collect();
    for r in &kept {
        if r.rows.len() != grid.len() || r.rows.iter().zip(&grid).any(|(row, k)| row.k != *k) {
            return Err(Error::Precondition("runs do not share a recording grid".into()));
        }
    }
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let stats = std::array::from_fn(|c| {
                let samples: Vec<f64> = kept.iter().filter_map(|r| r.rows[i].values()[c]).collect();
                Stat::from_samples(&samples)
            });
            AggregateRow {
                k,
                n: kept.len(),
                stats,
            }
        })
        .collect();
    Ok(AggregateMetrics {
        rows,
        n_runs: runs.len(),
        n_diverged,
    })
}

fn csv_header(lead: &[&str], cols: &[String]) -> String {
    let mut out = lead.join(",");
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    out
}

/// Shortest round-trip decimal; scientific outside `[1e-4, 1e15)`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        out.push_str(&format_f64(v));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{run, RunOptions, SumConfig};
    use crate::oracle::{OracleKind, OracleSpec};
    use crate::problems::{make_abs_loss, make_quadratic, make_softlog};

    fn row(k: usize, f: f64) -> MetricRow {
        MetricRow {
            k,
            f_x: f,
            gap_avg: Some(f),
            grad_norm_sq: f,
            min_grad_norm_sq: f,
            v_k: f,
            heldout_error: None,
            alpha: 0.1,
        }
    }

    fn synthetic(rows: Vec<MetricRow>) -> RunMetrics {
        let x = ParamVector::zeros(1);
        RunMetrics {
            rows,
            summary: RunSummary {
                seed: 0,
                steps: 0,
                diverged_at: None,
                left_box_at: None,
                final_x: x.clone(),
                averaged_iterate: x,
                final_gap: None,
                min_grad_norm_sq: 0.0,
                v_t: 0.0,
                max_draw_norm: 0.0,
                wall_time: Duration::ZERO,
            },
        }
    }

    #[test]
    fn oscillation_examples() {
        assert_eq!(oscillation_score(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(oscillation_score(&[0.0, 1.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(oscillation_score(&[1.0, 2.0, 4.0]).unwrap(), 1.5);
        assert!(oscillation_score(&[1.0]).is_err());
    }

    #[test]
    fn record_at_optimum() {
        let p = make_softlog(2).unwrap().with_start(ParamVector::zeros(2)).unwrap();
        let cfg = SumConfig::constant(0.9, 0.0, 0.1, 1).unwrap();
        let m = run(&p, &OracleSpec::deterministic(), &cfg, RunOptions::default()).unwrap();
        let r = &m.rows[0];
        assert_eq!((r.k, r.f_x, r.grad_norm_sq, r.gap_avg), (0, 0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn variational_term_with_constant_gradient() {
        // abs loss away from zero with a tiny step keeps the subgradient constant.
        let p = make_abs_loss(4).unwrap();
        let cfg = SumConfig::constant(0.5, 1.0, 1e-4, 50).unwrap();
        let m = run(&p, &OracleSpec::deterministic(), &cfg, RunOptions::default()).unwrap();
        for r in &m.rows {
            assert_eq!(r.v_k, 1.0, "k = {}", r.k);
        }
    }

    #[test]
    fn gap_column_matches_recomputation() {
        let p = make_quadratic(4, 5.0, 2).unwrap();
        let oracle = OracleSpec::new(OracleKind::AdditiveGaussian { noise_std: 0.3 }, 1).unwrap();
        let cfg = SumConfig::constant(0.9, 1.0, 0.01, 200).unwrap();
        let m = run(&p, &oracle, &cfg, RunOptions::default()).unwrap();
        let f_star = p.constants.f_star.unwrap();
        let traj = crate::optimizer::record_trajectory(&p, &oracle, &cfg).unwrap();
        for r in &m.rows {
            let n = (r.k + 1) as f64;
            let mut avg = vec![0.0; 4];
            for x in &traj.xs[..=r.k] {
                for (a, v) in avg.iter_mut().zip(x.iter()) {
                    *a += v / n;
                }
            }
            let expected = p.value_at(&ParamVector::new(avg).unwrap()).unwrap() - f_star;
            assert!((r.gap_avg.unwrap() - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn min_grad_nonincreasing_and_v_nondecreasing() {
        let p = make_softlog(5).unwrap();
        let oracle = OracleSpec::new(OracleKind::AdditiveGaussian { noise_std: 1.0 }, 3).unwrap();
        let cfg = SumConfig::constant(0.9, 1.0, 0.01, 300).unwrap();
        let m = run(&p, &oracle, &cfg, RunOptions { record_every: 7, grad_norm_every_step: true }).unwrap();
        for w in m.rows.windows(2) {
            assert!(w[1].min_grad_norm_sq <= w[0].min_grad_norm_sq);
            assert!(w[1].v_k >= w[0].v_k);
        }
        assert_eq!(m.rows.last().unwrap().k, 299);
    }

    #[test]
    fn aggregate_single_and_identical() {
        let a = synthetic(vec![row(0, 1.0), row(5, 2.0)]);
        let agg = aggregate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(agg.rows[1].stats[0].unwrap().mean, 2.0);
        assert!(agg.rows[1].stats[0].unwrap().se.is_none());
        let agg = aggregate(&[a.clone(), a]).unwrap();
        assert_eq!(agg.rows[0].stats[0].unwrap().se, Some(0.0));
        assert_eq!(agg.seed_count(), 2);
    }

    #[test]
    fn aggregate_hand_average() {
        let runs: Vec<_> = [1.0, 2.0, 6.0].iter().map(|&f| synthetic(vec![row(0, f)])).collect();
        let agg = aggregate(&runs).unwrap();
        let s = agg.rows[0].stats[0].unwrap();
        assert_eq!(s.mean, 3.0);
        // sample variance (4 + 1 + 9)/2 = 7, se = √(7/3)
        assert!((s.se.unwrap() - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(agg.rows[0].stats[5].is_none());
    }

    #[test]
    fn aggregate_excludes_divergent_and_checks_grid() {
        let mut bad = synthetic(vec![row(0, 100.0)]);
        bad.summary.diverged_at = Some(3);
        let good = synthetic(vec![row(0, 1.0), row(1, 1.0)]);
        let agg = aggregate(&[good.clone(), bad]).unwrap();
        assert_eq!((agg.n_runs, agg.n_diverged, agg.rows[0].n), (2, 1, 1));
        assert!(aggregate(&[]).is_err());
        let other = synthetic(vec![row(0, 1.0), row(2, 1.0)]);
        assert!(aggregate(&[good, other]).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = synthetic(vec![row(0, 0.5)]);
        let csv = m.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,f_x,gap_avg,grad_norm_sq,min_grad_norm_sq,v_k,heldout_error,alpha"
        );
        assert_eq!(lines.next().unwrap(), "0,0.5,0.5,0.5,0.5,0.5,,0.1");
        assert_eq!(format_f64(1.5e-7), "1.5e-7");
        assert_eq!(format_f64(0.25), "0.25");
    }
}
