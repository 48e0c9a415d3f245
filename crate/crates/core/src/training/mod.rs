//! Training orchestration: multi-threaded data generation with the
//! alpha-mixed behavioral policy, the replay buffer, learner iterations, and
//! periodic metrics rollouts.

mod datagen;
mod metrics;
mod replay;
mod trainer;

pub use datagen::{
    alpha_schedule, behavioral_action, generate_data, DataGenConfig, GenerationStats,
};
pub use metrics::{metrics_rollout, Controller, MetricsRecord, RolloutSetup};
pub use replay::{ReplayBuffer, ReplayTuple};
pub use trainer::{train, TrainConfig, TrainOutcome};

use thiserror::Error;

use crate::losses::LossError;
use crate::model::ModelError;
use crate::policy::PolicyError;
use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("replay buffer did not reach {needed} tuples within {timeout:.1} s")]
    BufferTimeout { needed: usize, timeout: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Loss(#[from] LossError),
}
