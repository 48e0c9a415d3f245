//! Hybrid point-foot walker model: dynamics, per-mode constraints, quadratic
//! tracking cost, gait schedules, and the policy input encodings derived from
//! them. All operations here are pure functions and safe to call
//! concurrently.

mod cost;
mod gait;
mod walker;

pub use cost::{
    CostSpec, CostTemplate, ReferenceTrajectory, DEFAULT_FOOT_OFFSETS, DEFAULT_QF_DIAG, DEFAULT_Q_DIAG,
    DEFAULT_R_DIAG,
};
pub use gait::{
    generalized_time, leg_phase, mode_probabilities, GaitSpec, GeneralizedTime, ModeSchedule,
    GENERALIZED_TIME_DIM,
};
pub use walker::{
    failure_check, flow_jacobians, flow_map, mode_constraints, mode_inequalities, relative_state,
    step, InequalityRow, Mode, RelativeState, WalkerInput, WalkerState, DEFAULT_HEIGHT,
    FAILURE_HEIGHT_DEVIATION, GRAVITY, INPUT_DIM, MASS, NUM_MODES, STATE_DIM,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("flight mode (no foot in contact) is not admissible")]
    FlightMode,
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("unknown gait `{0}`")]
    UnknownGait(String),
    #[error("invalid mode schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid time step {0}")]
    InvalidTimeStep(f64),
    #[error("invalid weight matrix {name}: {reason}")]
    InvalidWeight { name: &'static str, reason: String },
}
