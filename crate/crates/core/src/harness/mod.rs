//! Seeded Monte Carlo experiments and their outputs.
//!
//! Trial `i` of an experiment always draws from `rng::stream(master_seed, i)`
//! and results are reduced in trial order, so outputs do not depend on the
//! number of worker threads.

mod experiments;
mod output;
pub mod stats;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctmc::SimMode;
use crate::error::{Error, Result};
use crate::meanfield::default_step;
use crate::model::ModelParams;

pub use experiments::{
    estimate_deviation, estimate_success, mu_sweep, run_bounds, run_ode, run_simulate, run_trajectory,
    verify_coupling, verify_walk, CouplingReport, DeviationReport, MuSweepRow, SuccessReport, TrajectoryReport,
    WalkReport,
};
pub use output::{EstimateRecord, ExperimentOutput, Table};
pub use stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Ode,
    Trajectory,
    Learnability,
    Deviation,
    WalkVerify,
    CoupleVerify,
    Bounds,
    MuSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Ode => "ode",
            Self::Trajectory => "trajectory",
            Self::Learnability => "learnability",
            Self::Deviation => "deviation",
            Self::WalkVerify => "walk_verify",
            Self::CoupleVerify => "couple_verify",
            Self::Bounds => "bounds",
            Self::MuSweep => "mu_sweep",
        }
    }

    fn default_trials(self) -> u64 {
        match self {
            Self::Simulate | Self::Ode | Self::Trajectory | Self::Bounds => 1,
            Self::Learnability => 2000,
            Self::Deviation => 200,
            Self::WalkVerify | Self::CoupleVerify => 1000,
            Self::MuSweep => 500,
        }
    }

    fn default_horizon(self) -> f64 {
        match self {
            Self::Ode | Self::Trajectory | Self::Simulate => 60.0,
            _ => 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

fn default_half() -> f64 {
    0.5
}

fn default_eps() -> f64 {
    0.05
}

/// Everything needed to reproduce an experiment. Unset options fall back to
/// per-experiment defaults through the accessor methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub ode_step: Option<f64>,
    #[serde(default)]
    pub event_cap: Option<u64>,
    /// Slack in the Theorem-1 comparison.
    #[serde(default = "default_half")]
    pub delta: f64,
    #[serde(default = "default_eps")]
    pub eps_prime: f64,
    /// Start of the walk coupling; `1 / lambda` when unset.
    #[serde(default)]
    pub coupling_start: Option<f64>,
    /// Warm-up constant in `(0, 1)`.
    #[serde(default = "default_half")]
    pub c: f64,
    #[serde(default)]
    pub sim_mode: Option<SimMode>,
    /// Exploration probabilities for the sweep.
    #[serde(default)]
    pub mu_values: Vec<f64>,
    /// Worker threads; all cores when unset. Never affects results.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(params: ModelParams, experiment: ExperimentKind) -> Self {
        Self {
            params,
            experiment,
            trials: None,
            master_seed: 0,
            horizon: None,
            ode_step: None,
            event_cap: None,
            delta: default_half(),
            eps_prime: default_eps(),
            coupling_start: None,
            c: default_half(),
            sim_mode: None,
            mu_values: Vec::new(),
            workers: None,
            output_path: None,
            format: OutputFormat::Json,
        }
    }

    pub fn trials(&self) -> u64 {
        self.trials.unwrap_or(self.experiment.default_trials())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(self.experiment.default_horizon())
    }

    pub fn ode_step(&self) -> f64 {
        self.ode_step.unwrap_or(default_step(&self.params))
    }

    pub fn event_cap(&self) -> u64 {
        self.event_cap.unwrap_or(self.params.default_event_cap())
    }

    pub fn coupling_start(&self) -> f64 {
        self.coupling_start.unwrap_or(1.0 / self.params.clock_rate())
    }

    pub fn sim_mode(&self) -> SimMode {
        self.sim_mode.unwrap_or(SimMode::Ctmc)
    }

    pub fn mu_values(&self) -> Vec<f64> {
        if self.mu_values.is_empty() {
            vec![0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0]
        } else {
            self.mu_values.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials() == 0 {
            return Err(Error::out_of_range("trials", "must be at least 1"));
        }
        let h = self.horizon();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::out_of_range("horizon", format!("{h} is not positive")));
        }
        let s = self.ode_step();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::out_of_range("ode_step", format!("{s} is not positive")));
        }
        if self.event_cap() == 0 {
            return Err(Error::out_of_range("event_cap", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::out_of_range("delta", format!("{} not in (0, 1)", self.delta)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::out_of_range("c", format!("{} not in (0, 1)", self.c)));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime.is_finite()) {
            return Err(Error::out_of_range("eps_prime", format!("{} is not positive", self.eps_prime)));
        }
        let tc = self.coupling_start();
        if !(tc >= 0.0 && tc.is_finite()) {
            return Err(Error::out_of_range("coupling_start", format!("{tc} is negative")));
        }
        if self.workers == Some(0) {
            return Err(Error::out_of_range("workers", "must be at least 1"));
        }
        if let Some(&mu) = self.mu_values.iter().find(|&&m| !(m > 0.0 && m <= 1.0)) {
            return Err(Error::out_of_range("mu_values", format!("{mu} not in (0, 1]")));
        }
        Ok(())
    }
}

/// Runs `f(0..trials)` on a pool of `workers` threads and returns the results
/// in trial order.
pub fn run_trials<T, F>(trials: u64, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| (0..trials).into_par_iter().map(&f).collect())
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Simulate => run_simulate(config),
        ExperimentKind::Ode => run_ode(config),
        ExperimentKind::Trajectory => run_trajectory(config).map(|(_, out)| out),
        ExperimentKind::Learnability => estimate_success(config).map(|r| r.to_output(config)),
        ExperimentKind::Deviation => estimate_deviation(config).map(|(_, out)| out),
        ExperimentKind::WalkVerify => verify_walk(config).map(|r| r.to_output(config)),
        ExperimentKind::CoupleVerify => verify_coupling(config).map(|(_, out)| out),
        ExperimentKind::Bounds => run_bounds(config),
        ExperimentKind::MuSweep => mu_sweep(config).map(|(_, out)| out),
    }
}
