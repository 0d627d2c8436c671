//! Trajectory-replay checks of the algebraic identities behind the unified
//! update.
//!
//! Every check takes a recorded [`Trajectory`] plus the draws `G_k` replayed
//! from the counter-based oracle, recomputes the quantities from their
//! definitions, and reports the worst absolute discrepancy. With
//! `v_k := x_k − x_{k−1} + sαG_{k−1}` (so `v_0 = 0`, using `G_{−1} = 0`) and
//! `p_k = β/(1−β)·v_k`:
//!
//! ```text
//! x_{k+1} + p_{k+1} = x_k + p_k − α/(1−β)·G_k
//! v_{k+1}           = β v_k + ((1−β)s − 1) α G_k
//! v_k               = α̂ Σ_{i<k} β^{k−1−i} G_i,   α̂ = α((1−β)s − 1)
//! Σ_{i<k} β^i       = (1 − β^k)/(1 − β)
//! ```

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{record_trajectory, sgd_equivalent_s, shb_native_step, snag_native_step, SumConfig, Trajectory};
use crate::oracle::{OracleDraw, OracleKind, OracleSpec};
use crate::problems::{make_abs_loss, make_logreg_with, make_quadratic, make_softlog, ProblemSpec};
use crate::vector::ParamVector;

pub const RECURSION_TOL: f64 = 1e-10;
pub const CLOSED_FORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity_name: String,
    pub max_abs_error: f64,
    pub steps_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when the identity's hypotheses do not hold and nothing was checked.
    pub skipped: Option<String>,
}

impl IdentityReport {
    fn checked(name: &str, max_abs_error: f64, steps_checked: usize, tolerance: f64) -> Self {
        Self {
            identity_name: name.to_string(),
            max_abs_error,
            steps_checked,
            tolerance,
            passed: max_abs_error <= tolerance,
            skipped: None,
        }
    }

    fn skipped(name: &str, tolerance: f64, reason: impl Into<String>) -> Self {
        Self {
            identity_name: name.to_string(),
            max_abs_error: 0.0,
            steps_checked: 0,
            tolerance,
            passed: true,
            skipped: Some(reason.into()),
        }
    }

    /// Folds another report for the same identity into this one.
    pub fn merge(&mut self, other: &IdentityReport) {
        if other.skipped.is_none() {
            self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
            self.steps_checked += other.steps_checked;
            self.skipped = None;
        }
        self.passed = self.max_abs_error <= self.tolerance;
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (&self.skipped, self.passed) {
            (Some(_), _) => "SKIP",
            (None, true) => "PASS",
            (None, false) => "FAIL",
        };
        write!(
            f,
            "{status} {:<20} max_abs_error={:.3e} tol={:.0e} steps={}",
            self.identity_name, self.max_abs_error, self.tolerance, self.steps_checked
        )?;
        if let Some(reason) = &self.skipped {
            write!(f, " ({reason})")?;
        }
        Ok(())
    }
}

/// Re-draws `G_0..G_{T−1}` at the recorded iterates.
pub fn replay_draws(problem: &ProblemSpec, oracle: &OracleSpec, traj: &Trajectory) -> Result<Vec<OracleDraw>> {
    (0..traj.steps())
        .map(|k| oracle.draw(problem, &traj.xs[k], k))
        .collect()
}

fn require_constant_alpha(config: &SumConfig) -> Result<f64> {
    if config.schedule.is_constant() {
        Ok(config.alpha(0))
    } else {
        Err(Error::Precondition("identity checks require a constant step size".into()))
    }
}

fn check_lengths(traj: &Trajectory, draws: &[OracleDraw]) -> Result<()> {
    if draws.len() != traj.steps() || traj.ps.len() != traj.xs.len() {
        return Err(Error::Precondition(format!(
            "trajectory has {} steps but {} draws",
            traj.steps(),
            draws.len()
        )));
    }
    Ok(())
}

/// `v_0..v_T` from the iterate differences.
fn v_from_iterates(traj: &Trajectory, s: f64, alpha: f64, draws: &[OracleDraw]) -> Vec<Vec<f64>> {
    let dim = traj.xs[0].dim();
    let mut out = vec![vec![0.0; dim]];
    for k in 1..traj.xs.len() {
        let (x, xp, g) = (&traj.xs[k], &traj.xs[k - 1], &draws[k - 1].gradient);
        out.push((0..dim).map(|i| x[i] - xp[i] + s * alpha * g[i]).collect());
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `x_{k+1} + p_{k+1} = x_k + p_k − α/(1−β)·G_k`, with `p_k` from its definition.
pub fn check_z_recursion(traj: &Trajectory, config: &SumConfig, draws: &[OracleDraw]) -> Result<IdentityReport> {
    let name = "z_recursion";
    let Ok(alpha) = require_constant_alpha(config) else {
        return Ok(IdentityReport::skipped(name, RECURSION_TOL, "step size varies"));
    };
    check_lengths(traj, draws)?;
    let beta = config.beta;
    let coef = beta / (1.0 - beta);
    let v = v_from_iterates(traj, config.s, alpha, draws);
    let z = |k: usize| -> Vec<f64> { traj.xs[k].iter().zip(&v[k]).map(|(x, vi)| x + coef * vi).collect() };
    let mut worst = 0.0f64;
    for k in 0..traj.steps() {
        let zk = z(k);
        let g = &draws[k].gradient;
        let expected: Vec<f64> = zk.iter().zip(g.iter()).map(|(z, g)| z - alpha / (1.0 - beta) * g).collect();
        worst = worst.max(max_diff(&z(k + 1), &expected));
    }
    Ok(IdentityReport::checked(name, worst, traj.steps(), RECURSION_TOL))
}

/// The stepper's incrementally updated `p_k` against its closed definition.
pub fn check_p_definition(traj: &Trajectory, config: &SumConfig, draws: &[OracleDraw]) -> Result<IdentityReport> {
    let name = "p_definition";
    let Ok(alpha) = require_constant_alpha(config) else {
        return Ok(IdentityReport::skipped(name, RECURSION_TOL, "step size varies"));
    };
    check_lengths(traj, draws)?;
    let coef = config.beta / (1.0 - config.beta);
    let v = v_from_iterates(traj, config.s, alpha, draws);
    let worst = (0..traj.xs.len()).fold(0.0f64, |m, k| {
        let p_def: Vec<f64> = v[k].iter().map(|vi| coef * vi).collect();
        m.max(max_diff(traj.ps[k].as_slice(), &p_def))
    });
    Ok(IdentityReport::checked(name, worst, traj.steps(), RECURSION_TOL))
}

/// `v_{k+1} = βv_k + ((1−β)s−1)αG_k` and `v_k = (1−β)/β·p_k`. Skipped at
/// `β = 0`, where the second relation is undefined.
pub fn check_v_recursion(traj: &Trajectory, config: &SumConfig, draws: &[OracleDraw]) -> Result<IdentityReport> {
    let name = "v_recursion";
    if config.beta == 0.0 {
        return Ok(IdentityReport::skipped(name, RECURSION_TOL, "beta = 0"));
    }
    let Ok(alpha) = require_constant_alpha(config) else {
        return Ok(IdentityReport::skipped(name, RECURSION_TOL, "step size varies"));
    };
    check_lengths(traj, draws)?;
    let (beta, s) = (config.beta, config.s);
    let ahat = alpha * ((1.0 - beta) * s - 1.0);
    let v = v_from_iterates(traj, s, alpha, draws);
    let mut worst = 0.0f64;
    for k in 0..traj.steps() {
        let g = &draws[k].gradient;
        let next: Vec<f64> = v[k].iter().zip(g.iter()).map(|(vi, gi)| beta * vi + ahat * gi).collect();
        worst = worst.max(max_diff(&v[k + 1], &next));
    }
    let ratio = (1.0 - beta) / beta;
    for k in 0..traj.xs.len() {
        let from_p: Vec<f64> = traj.ps[k].iter().map(|p| ratio * p).collect();
        worst = worst.max(max_diff(&v[k], &from_p));
    }
    Ok(IdentityReport::checked(name, worst, traj.steps(), RECURSION_TOL))
}

/// `v_k = α̂ Σ_{i<k} β^{k−1−i} G_i` by explicit summation, against both the
/// iterate-difference `v_k` and the recursively accumulated one, plus the
/// geometric-sum identity for `Γ_{k−1}`.
pub fn check_v_closed_form(traj: &Trajectory, config: &SumConfig, draws: &[OracleDraw]) -> Result<IdentityReport> {
    let name = "v_closed_form";
    let Ok(alpha) = require_constant_alpha(config) else {
        return Ok(IdentityReport::skipped(name, CLOSED_FORM_TOL, "step size varies"));
    };
    check_lengths(traj, draws)?;
    let (beta, s) = (config.beta, config.s);
    let dim = traj.xs[0].dim();
    let ahat = alpha * ((1.0 - beta) * s - 1.0);
    let v = v_from_iterates(traj, s, alpha, draws);
    let mut v_rec = vec![0.0; dim];
    let mut worst = 0.0f64;
    for k in 1..traj.xs.len() {
        let g_prev = &draws[k - 1].gradient;
        for (vr, g) in v_rec.iter_mut().zip(g_prev.iter()) {
            *vr = beta * *vr + ahat * g;
        }
        let mut explicit = vec![0.0; dim];
        for (i, d) in draws[..k].iter().enumerate() {
            let w = ahat * beta.powi((k - 1 - i) as i32);
            for (e, g) in explicit.iter_mut().zip(d.gradient.iter()) {
                *e += w * g;
            }
        }
        worst = worst.max(max_diff(&explicit, &v[k])).max(max_diff(&explicit, &v_rec));
        let gamma_direct: f64 = (0..k).map(|i| beta.powi(i as i32)).sum();
        let gamma_closed = (1.0 - beta.powi(k as i32)) / (1.0 - beta);
        worst = worst.max((gamma_direct - gamma_closed).abs());
    }
    Ok(IdentityReport::checked(name, worst, traj.steps(), CLOSED_FORM_TOL))
}

/// Unified run with `s = 1/(1−β)` against the loop `x_{k+1} = x_k − α/(1−β)·G_k`
/// on the same counter-based draws.
pub fn check_gd_equivalence(problem: &ProblemSpec, oracle: &OracleSpec, config: &SumConfig) -> Result<IdentityReport> {
    let s_gd = sgd_equivalent_s(config.beta);
    if (config.s - s_gd).abs() > 1e-12 * s_gd {
        return Err(Error::Precondition(format!(
            "gd equivalence needs s = 1/(1−β) = {s_gd}, got {}",
            config.s
        )));
    }
    let alpha = require_constant_alpha(config)?;
    let traj = record_trajectory(problem, oracle, config)?;
    let step = alpha / (1.0 - config.beta);
    let mut x = problem.x0.clone();
    let mut worst = 0.0f64;
    for k in 0..config.horizon {
        let g = oracle.draw(problem, &x, k)?;
        x.axpy_in_place(-step, &g.gradient)?;
        worst = worst.max(x.max_abs_diff(&traj.xs[k + 1])?);
    }
    Ok(IdentityReport::checked("gd_equivalence", worst, config.horizon, RECURSION_TOL))
}

/// Unified run with `s = 0` against native heavy-ball.
pub fn check_shb_equivalence(problem: &ProblemSpec, oracle: &OracleSpec, config: &SumConfig) -> Result<IdentityReport> {
    if config.s != 0.0 {
        return Err(Error::Precondition("shb equivalence needs s = 0".into()));
    }
    let traj = record_trajectory(problem, oracle, config)?;
    let (mut x, mut x_prev) = (problem.x0.clone(), problem.x0.clone());
    let mut worst = 0.0f64;
    for k in 0..config.horizon {
        let draw = oracle.draw(problem, &x, k)?;
        let next = shb_native_step(&x, &x_prev, config, &draw)?;
        worst = worst.max(next.max_abs_diff(&traj.xs[k + 1])?);
        x_prev = std::mem::replace(&mut x, next);
    }
    Ok(IdentityReport::checked("shb_equivalence", worst, config.horizon, RECURSION_TOL))
}

/// Unified run with `s = 1` against native two-step Nesterov.
pub fn check_snag_equivalence(problem: &ProblemSpec, oracle: &OracleSpec, config: &SumConfig) -> Result<IdentityReport> {
    if config.s != 1.0 {
        return Err(Error::Precondition("snag equivalence needs s = 1".into()));
    }
    let traj = record_trajectory(problem, oracle, config)?;
    let (mut x, mut y) = (problem.x0.clone(), problem.x0.clone());
    let mut worst = 0.0f64;
    for k in 0..config.horizon {
        let draw = oracle.draw(problem, &x, k)?;
        let (xn, yn) = snag_native_step(&x, &y, config, &draw)?;
        worst = worst.max(xn.max_abs_diff(&traj.xs[k + 1])?);
        x = xn;
        y = yn;
    }
    Ok(IdentityReport::checked("snag_equivalence", worst, config.horizon, RECURSION_TOL))
}

/// A randomized configuration for the identity battery.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub problem: ProblemSpec,
    pub oracle: OracleSpec,
    pub beta: f64,
    pub alpha: f64,
}

/// Draws a random problem (dimension ≤ `max_dim`), oracle, β ∈ [0, 0.99] and
/// α ∈ (0, 0.1]. Problems have bounded gradients, or step sizes inside the
/// stable range for the quadratic, so iterates stay O(1).
pub fn random_case(seed: u64, max_dim: usize) -> Result<RandomCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1de7);
    let dim = rng.random_range(1..=max_dim.max(1));
    let beta = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..=0.99) };
    let mut alpha = 0.1 * (1.0 - rng.random::<f64>());
    let noise = rng.random_range(0.0..1.0);
    let additive = OracleSpec::new(OracleKind::AdditiveGaussian { noise_std: noise }, rng.random())?;
    let (problem, oracle) = match rng.random_range(0..4) {
        0 => (make_softlog(dim)?, additive),
        1 => (make_abs_loss(dim)?, additive),
        2 => {
            let p = make_quadratic(dim, rng.random_range(1.0..10.0), rng.random())?;
            let start = ParamVector::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())?;
            // Keep the effective step α/(1−β) below 1/L.
            alpha = alpha.min(0.5 * (1.0 - beta) / p.constants.l.unwrap_or(1.0));
            (p.with_start(start)?, additive)
        }
        _ => {
            let p = make_logreg_with(64, dim, rng.random(), 1e-3, 1.0)?;
            let batch = rng.random_range(1..=16);
            (p, OracleSpec::new(OracleKind::Minibatch { batch_size: batch }, rng.random())?)
        }
    };
    Ok(RandomCase {
        problem,
        oracle,
        beta,
        alpha,
    })
}

/// Every recursion identity on one trajectory.
pub fn check_all_recursions(problem: &ProblemSpec, oracle: &OracleSpec, config: &SumConfig) -> Result<Vec<IdentityReport>> {
    let traj = record_trajectory(problem, oracle, config)?;
    let draws = replay_draws(problem, oracle, &traj)?;
    Ok(vec![
        check_z_recursion(&traj, config, &draws)?,
        check_p_definition(&traj, config, &draws)?,
        check_v_recursion(&traj, config, &draws)?,
        check_v_closed_form(&traj, config, &draws)?,
    ])
}

/// Battery settings for [`run_battery`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatteryOptions {
    pub cases: usize,
    pub recursion_steps: usize,
    pub equivalence_steps: usize,
    pub max_dim: usize,
    pub base_seed: u64,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            cases: 200,
            recursion_steps: 500,
            equivalence_steps: 100,
            max_dim: 50,
            base_seed: 0,
        }
    }
}

/// Runs every identity on `cases` random configurations and folds the results
/// into one report per identity.
pub fn run_battery(opts: BatteryOptions) -> Result<Vec<IdentityReport>> {
    let mut merged: Vec<IdentityReport> = Vec::new();
    let mut fold = |r: IdentityReport| match merged.iter_mut().find(|m| m.identity_name == r.identity_name) {
        Some(m) => m.merge(&r),
        None => merged.push(r),
    };
    for i in 0..opts.cases {
        let case = random_case(opts.base_seed.wrapping_add(i as u64), opts.max_dim)?;
        let s = {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.base_seed.wrapping_add(i as u64));
            rng.random_range(0.0..=2.0 * sgd_equivalent_s(case.beta))
        };
        let cfg = SumConfig::constant(case.beta, s, case.alpha, opts.recursion_steps)?;
        for r in check_all_recursions(&case.problem, &case.oracle, &cfg)? {
            fold(r);
        }
        let eq = |s: f64| SumConfig::constant(case.beta, s, case.alpha, opts.equivalence_steps);
        fold(check_shb_equivalence(&case.problem, &case.oracle, &eq(0.0)?)?);
        fold(check_snag_equivalence(&case.problem, &case.oracle, &eq(1.0)?)?);
        fold(check_gd_equivalence(&case.problem, &case.oracle, &eq(sgd_equivalent_s(case.beta))?)?);
    }
    Ok(merged)
}
