//! Benchmark harness: the L2-vs-L3 ablation with single-responsibility
//! statistics, the MPC-Net-vs-BC robustness comparison, and the
//! multi-gait-vs-single-gait study. Every benchmark emits CSV reports plus a
//! summary.txt stating pass/fail of its encoded checks.

mod ablation;
mod bc;
mod multigait;
mod report;
mod responsibility;

pub use ablation::{run_ablation, AblationOutcome};
pub use bc::{run_bc_benchmark, BcOutcome, SurvivalRow};
pub use multigait::{run_multigait, MultigaitOutcome};
pub use report::{write_csv, write_summary, CheckResult};
pub use responsibility::{responsibility_stats, ResponsibilityReport};

use std::path::PathBuf;

use thiserror::Error;

use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("io error for `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("benchmark needs at least {needed} seeds, got {got}")]
    TooFewSeeds { needed: usize, got: usize },
}

/// Benchmark-wide settings.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// Training seeds, one run per seed per cell.
    pub seeds: Vec<u64>,
    /// Evaluation rollouts per (scale, controller) cell.
    pub eval_runs: usize,
    /// Disturbance impulse magnitudes (m/s).
    pub scales: Vec<f64>,
    /// Evaluation rollout duration in benchmark mode (seconds).
    pub eval_duration: f64,
    /// (t, x) samples for the responsibility statistic.
    pub responsibility_points: usize,
    /// Mean dominant weight needed for single responsibility.
    pub responsibility_threshold: f64,
    /// Independent training runs executed concurrently.
    pub parallelism: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            eval_runs: 50,
            scales: vec![0.0, 0.3, 0.6],
            eval_duration: 20.0,
            responsibility_points: 400,
            responsibility_threshold: 0.8,
            parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}
