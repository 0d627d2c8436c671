//! The unified momentum stepper.
//!
//! For step size `α`, momentum `β ∈ [0, 1)` and free parameter `s ≥ 0`:
//!
//! ```text
//! y_{k+1}   = x_k − α G_k
//! y^s_{k+1} = x_k − sα G_k
//! x_{k+1}   = y_{k+1} + β (y^s_{k+1} − y^s_k),      y^s_0 = x_0
//! ```
//!
//! `s = 0` is stochastic heavy-ball, `s = 1` stochastic Nesterov, and
//! `s = 1/(1−β)` plain SGD with step `α/(1−β)`. The native two-step forms of
//! the first two live here too, so the unified form can be cross-checked.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricsRecorder, RunMetrics};
use crate::oracle::{OracleDraw, OracleSpec};
use crate::problems::ProblemSpec;
use crate::vector::ParamVector;

/// Iterates whose Euclidean norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// The `s` that turns the unified update into plain SGD.
pub fn sgd_equivalent_s(beta: f64) -> f64 {
    1.0 / (1.0 - beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlphaSchedule {
    Constant { alpha: f64 },
    /// `α = C/√(t+1)`.
    Theorem1 { c: f64 },
    /// `α = min{(1−β)/(2L), C/√(t+1)}`.
    Theorem3 { c: f64, l: f64 },
    /// `α = min{(1−β)/(2L[1+((1−β)s−1)²]), C/√(t+1)}`.
    Theorem4 { c: f64, l: f64 },
    /// `alpha0`, multiplied by `factor` at the start of each listed epoch.
    StepDecay {
        alpha0: f64,
        factor: f64,
        epochs: Vec<usize>,
        epoch_length: usize,
    },
}

impl AlphaSchedule {
    /// Step size at iteration `k` for a run of `horizon = t+1` steps.
    pub fn alpha(&self, k: usize, beta: f64, s: f64, horizon: usize) -> f64 {
        let sqrt_h = (horizon as f64).sqrt();
        match self {
            AlphaSchedule::Constant { alpha } => *alpha,
            AlphaSchedule::Theorem1 { c } => c / sqrt_h,
            AlphaSchedule::Theorem3 { c, l } => ((1.0 - beta) / (2.0 * l)).min(c / sqrt_h),
            AlphaSchedule::Theorem4 { c, l } => {
                let m = (1.0 - beta) * s - 1.0;
                ((1.0 - beta) / (2.0 * l * (1.0 + m * m))).min(c / sqrt_h)
            }
            AlphaSchedule::StepDecay {
                alpha0,
                factor,
                epochs,
                epoch_length,
            } => {
                let cuts = epochs.iter().filter(|&&e| e * epoch_length <= k).count();
                alpha0 * factor.powi(cuts as i32)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, AlphaSchedule::StepDecay { .. })
    }

    pub fn label(&self) -> String {
        match self {
            AlphaSchedule::Constant { alpha } => format!("const{alpha}"),
            AlphaSchedule::Theorem1 { c } => format!("thm1c{c}"),
            AlphaSchedule::Theorem3 { c, .. } => format!("thm3c{c}"),
            AlphaSchedule::Theorem4 { c, .. } => format!("thm4c{c}"),
            AlphaSchedule::StepDecay { alpha0, .. } => format!("decay{alpha0}"),
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            AlphaSchedule::Constant { alpha } => pos(*alpha, "alpha"),
            AlphaSchedule::Theorem1 { c } => pos(*c, "C"),
            AlphaSchedule::Theorem3 { c, l } | AlphaSchedule::Theorem4 { c, l } => {
                pos(*c, "C")?;
                pos(*l, "L")
            }
            AlphaSchedule::StepDecay {
                alpha0,
                factor,
                epoch_length,
                ..
            } => {
                pos(*alpha0, "alpha0")?;
                pos(*factor, "factor")?;
                pos(*epoch_length as f64, "epoch_length")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumConfig {
    pub beta: f64,
    pub s: f64,
    pub schedule: AlphaSchedule,
    /// Number of steps, `t + 1`.
    pub horizon: usize,
}

impl SumConfig {
    pub fn new(beta: f64, s: f64, schedule: AlphaSchedule, horizon: usize) -> Result<Self> {
        let cfg = Self {
            beta,
            s,
            schedule,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn constant(beta: f64, s: f64, alpha: f64, horizon: usize) -> Result<Self> {
        Self::new(beta, s, AlphaSchedule::Constant { alpha }, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.s.is_nan() || self.s < 0.0 || !self.s.is_finite() {
            return Err(Error::InvalidConfig(format!("s must be ≥ 0, got {}", self.s)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be ≥ 1".into()));
        }
        self.schedule.validate()
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.schedule.alpha(k, self.beta, self.s, self.horizon)
    }
}

/// Per-iteration optimizer state, O(d) memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SumState {
    pub k: usize,
    /// Current iterate `x_k`.
    pub x: ParamVector,
    /// `y^s_k`.
    pub ys_prev: ParamVector,
    /// Running mean of `x_0..x_k`.
    pub avg_x: ParamVector,
    /// `p_k = β/(1−β)·(x_k − x_{k−1} + sα_{k−1}G_{k−1})`, with `p_0 = 0`.
    pub p: ParamVector,
    /// `G_{k−1}`.
    pub last_draw: Option<OracleDraw>,
}

impl SumState {
    pub fn new(x0: ParamVector) -> Self {
        let dim = x0.dim();
        Self {
            k: 0,
            ys_prev: x0.clone(),
            avg_x: x0.clone(),
            x: x0,
            p: ParamVector::zeros(dim),
            last_draw: None,
        }
    }

    /// Advances one unified step in place. On error the state is unchanged.
    pub fn step(&mut self, config: &SumConfig, draw: OracleDraw) -> Result<()> {
        if draw.draw_index != self.k {
            return Err(Error::Precondition(format!(
                "draw index {} does not match iteration {}",
                draw.draw_index, self.k
            )));
        }
        let dim = self.x.dim();
        draw.gradient.ensure_dim(dim)?;
        let alpha = config.alpha(self.k);
        let (beta, s) = (config.beta, config.s);
        let g = draw.gradient.as_slice();
        let x = self.x.as_slice();
        let ys_prev = self.ys_prev.as_slice();

        let mut x_next = ParamVector::zeros(dim);
        let mut ys_next = ParamVector::zeros(dim);
        let mut p_next = ParamVector::zeros(dim);
        let p_scale = beta / (1.0 - beta);
        {
            let (xn, ysn, pn) = (x_next.as_mut_slice(), ys_next.as_mut_slice(), p_next.as_mut_slice());
            for i in 0..dim {
                let y = x[i] - alpha * g[i];
                ysn[i] = x[i] - s * alpha * g[i];
                xn[i] = y + beta * (ysn[i] - ys_prev[i]);
                pn[i] = p_scale * (xn[i] - x[i] + s * alpha * g[i]);
            }
        }
        let next_k = self.k + 1;
        if x_next.ensure_finite("um_step").is_err() || x_next.norm2() > DIVERGENCE_NORM {
            return Err(Error::Diverged { k: next_k });
        }
        let mut avg = self.avg_x.clone();
        let w = 1.0 / (next_k + 1) as f64;
        for (a, xn) in avg.as_mut_slice().iter_mut().zip(x_next.as_slice()) {
            *a += (xn - *a) * w;
        }
        self.k = next_k;
        self.x = x_next;
        self.ys_prev = ys_next;
        self.p = p_next;
        self.avg_x = avg;
        self.last_draw = Some(draw);
        Ok(())
    }

    /// The running mean `x̂_k = Σ_{j≤k} x_j/(k+1)`.
    pub fn averaged_iterate(&self) -> &ParamVector {
        &self.avg_x
    }
}

/// One unified update; consumes and returns the state.
pub fn um_step(mut state: SumState, config: &SumConfig, draw: OracleDraw) -> Result<SumState> {
    state.step(config, draw)?;
    Ok(state)
}

pub fn averaged_iterate(state: &SumState) -> ParamVector {
    state.avg_x.clone()
}

fn check_native(x: &ParamVector, k: usize) -> Result<()> {
    if x.ensure_finite("native step").is_err() || x.norm2() > DIVERGENCE_NORM {
        Err(Error::Diverged { k: k + 1 })
    } else {
        Ok(())
    }
}

/// Heavy-ball in its original form: `x_{k+1} = x_k − αG_k + β(x_k − x_{k−1})`,
/// with `x_{−1} = x_0`.
pub fn shb_native_step(
    x_k: &ParamVector,
    x_prev: &ParamVector,
    config: &SumConfig,
    draw: &OracleDraw,
) -> Result<ParamVector> {
    x_prev.ensure_dim(x_k.dim())?;
    draw.gradient.ensure_dim(x_k.dim())?;
    let alpha = config.alpha(draw.draw_index);
    let out = ParamVector::new(
        x_k.iter()
            .zip(x_prev.iter())
            .zip(draw.gradient.iter())
            .map(|((x, xp), g)| x - alpha * g + config.beta * (x - xp))
            .collect(),
    )
    .map_err(|_| Error::Diverged { k: draw.draw_index + 1 })?;
    check_native(&out, draw.draw_index)?;
    Ok(out)
}

/// Nesterov in two-step form: `y_{k+1} = x_k − αG_k`,
/// `x_{k+1} = y_{k+1} + β(y_{k+1} − y_k)`, with `y_0 = x_0`.
/// Returns `(x_{k+1}, y_{k+1})`.
pub fn snag_native_step(
    x_k: &ParamVector,
    y_k: &ParamVector,
    config: &SumConfig,
    draw: &OracleDraw,
) -> Result<(ParamVector, ParamVector)> {
    y_k.ensure_dim(x_k.dim())?;
    draw.gradient.ensure_dim(x_k.dim())?;
    let alpha = config.alpha(draw.draw_index);
    let diverged = |_| Error::Diverged { k: draw.draw_index + 1 };
    let y_next = ParamVector::new(
        x_k.iter()
            .zip(draw.gradient.iter())
            .map(|(x, g)| x - alpha * g)
            .collect(),
    )
    .map_err(diverged)?;
    let x_next = ParamVector::new(
        y_next
            .iter()
            .zip(y_k.iter())
            .map(|(yn, y)| yn + config.beta * (yn - y))
            .collect(),
    )
    .map_err(diverged)?;
    check_native(&x_next, draw.draw_index)?;
    Ok((x_next, y_next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Record a metrics row every this many iterations (and always at the last).
    pub record_every: usize,
    /// Evaluate `‖∇f(x_k)‖²` at every iterate for the running minimum, not
    /// only on the recording grid.
    pub grad_norm_every_step: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            grad_norm_every_step: true,
        }
    }
}

/// Runs `config.horizon` unified steps from `problem.x0`, drawing
/// `G_0..G_t` at `x_0..x_t`. Divergence ends the run early and is recorded in
/// the summary rather than returned as an error.
pub fn run(
    problem: &ProblemSpec,
    oracle: &OracleSpec,
    config: &SumConfig,
    options: RunOptions,
) -> Result<RunMetrics> {
    config.validate()?;
    oracle.validate()?;
    if options.record_every == 0 {
        return Err(Error::InvalidConfig("record_every must be ≥ 1".into()));
    }
    let started = Instant::now();
    let mut state = SumState::new(problem.x0.clone());
    let mut recorder = MetricsRecorder::new(problem, oracle.seed);
    let last = config.horizon - 1;
    for k in 0..config.horizon {
        let draw = match oracle.draw(problem, &state.x, k) {
            Ok(d) => d,
            Err(Error::NonFinite(_)) => {
                recorder.mark_diverged(k);
                break;
            }
            Err(e) => return Err(e),
        };
        recorder.observe_draw(&draw.gradient);
        let on_grid = k % options.record_every == 0 || k == last;
        if on_grid {
            recorder.record(&state, config.alpha(k))?;
        } else if options.grad_norm_every_step {
            recorder.observe_grad_norm(&state.x)?;
        }
        if k == last {
            recorder.set_averaged_iterate(state.avg_x.clone());
        }
        match state.step(config, draw) {
            Ok(()) => {}
            Err(Error::Diverged { k }) => {
                recorder.mark_diverged(k);
                break;
            }
            Err(e) => return Err(e),
        }
        if !problem.in_box(&state.x) {
            recorder.mark_left_box(state.k);
        }
    }
    Ok(recorder.finish(&state, started.elapsed()))
}

/// Full history of a unified run, kept for identity replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0..x_T`.
    pub xs: Vec<ParamVector>,
    /// The stepper's incrementally maintained `p_0..p_T`.
    pub ps: Vec<ParamVector>,
    /// `y^s_0..y^s_T`.
    pub ys: Vec<ParamVector>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.xs.len() - 1
    }
}

/// Runs the unified stepper for `config.horizon` steps and keeps every iterate.
pub fn record_trajectory(problem: &ProblemSpec, oracle: &OracleSpec, config: &SumConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut state = SumState::new(problem.x0.clone());
    let mut traj = Trajectory {
        xs: vec![state.x.clone()],
        ps: vec![state.p.clone()],
        ys: vec![state.ys_prev.clone()],
    };
    for k in 0..config.horizon {
        let draw = oracle.draw(problem, &state.x, k)?;
        state.step(config, draw)?;
        traj.xs.push(state.x.clone());
        traj.ps.push(state.p.clone());
        traj.ys.push(state.ys_prev.clone());
    }
    Ok(traj)
}
