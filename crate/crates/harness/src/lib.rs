//! Config-driven experiment runner for the stochastic unified momentum family.
//!
//! An [`ExperimentConfig`] names a problem, an oracle, a list of `(s, β)`
//! variants, a step-size schedule and a seed set. [`run_experiment`] executes
//! every `(variant, seed)` pair, aggregates per variant in a fixed order, and
//! writes per-run and aggregate CSVs plus a `summary.json`.

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, Experiment, ExperimentOutcome};
