//! Constrained SLQ optimal-control solver over a receding horizon: nominal
//! trajectories, time-varying feedback gains, a local quadratic value model,
//! Lagrange multipliers, and Hamiltonian evaluations.

mod barrier;
mod hamiltonian;
mod problem;
mod slq;
mod solution;

pub use barrier::BarrierParams;
pub use hamiltonian::{
    eval_hamiltonian, eval_lagrangian, eval_problem_hamiltonian, walker_flow_matrices,
    HamiltonianData, WalkerHamiltonian,
};
pub use problem::{CostExpansion, EqualityConstraint, OcProblem, ScalarLqr, WalkerOcp};
pub use slq::{Slq, SlqSettings};
pub use solution::{mpc_policy_eval, SolverSolution, ValueQuad};

use nalgebra::DVector;
use thiserror::Error;

use crate::model::{CostSpec, ModeSchedule, ModelError, WalkerState};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time {t} outside solution horizon [{start}, {end}]")]
    OutsideHorizon { t: f64, start: f64, end: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("multiplier length mismatch: expected {expected}, found {found}")]
    MultiplierDimension { expected: usize, found: usize },
    #[error("invalid problem definition: {0}")]
    InvalidOcp(String),
    #[error("constraint block with {rows} rows is rank deficient")]
    DegenerateConstraints { rows: usize },
    #[error("forward rollout diverged at iteration {iteration}")]
    Diverged { iteration: usize },
}

/// Receding-horizon problem definition for the walker.
#[derive(Clone, Debug)]
pub struct OcpDefinition {
    /// Horizon length t_h in seconds.
    pub horizon: f64,
    pub cost: CostSpec,
    pub schedule: ModeSchedule,
    pub barrier_mu: f64,
    pub barrier_delta: f64,
    /// Discretization step.
    pub dt: f64,
}

impl OcpDefinition {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.horizon > 0.0) {
            return Err(SolverError::InvalidOcp("horizon must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(SolverError::InvalidOcp("dt must be positive".into()));
        }
        if !(self.barrier_mu > 0.0) || !(self.barrier_delta > 0.0) {
            return Err(SolverError::InvalidOcp("barrier parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn barrier(&self) -> BarrierParams {
        BarrierParams::new(self.barrier_mu, self.barrier_delta)
    }

    fn settings(&self) -> SlqSettings {
        SlqSettings { dt: self.dt, barrier: self.barrier(), ..SlqSettings::default() }
    }
}

/// One-shot solve of the walker OCP from `x_s` at start time `t_s`.
pub fn solve(
    ocp: &OcpDefinition,
    x_s: &WalkerState,
    t_s: f64,
) -> Result<SolverSolution, SolverError> {
    ocp.validate()?;
    x_s.check_finite()?;
    let problem = WalkerOcp::new(ocp.cost.clone(), ocp.schedule.clone());
    let mut slq = Slq::new(problem, ocp.settings());
    slq.solve(
        &DVector::from_row_slice(x_s.to_vector().as_slice()),
        t_s,
        ocp.horizon,
        None,
    )
}

/// Persistent receding-horizon controller: repeated solves reuse the last
/// solution as a warm start. One instance per data-generation worker.
pub struct WalkerMpc {
    slq: Slq<WalkerOcp>,
    horizon: f64,
    last: Option<SolverSolution>,
}

impl WalkerMpc {
    pub fn new(ocp: OcpDefinition) -> Result<Self, SolverError> {
        ocp.validate()?;
        let problem = WalkerOcp::new(ocp.cost.clone(), ocp.schedule.clone());
        Ok(Self { slq: Slq::new(problem, ocp.settings()), horizon: ocp.horizon, last: None })
    }

    pub fn barrier(&self) -> BarrierParams {
        self.slq.settings.barrier
    }

    pub fn problem(&self) -> &WalkerOcp {
        &self.slq.problem
    }

    /// Solves from the given state and time, warm-started when possible.
    pub fn solve_from(
        &mut self,
        x: &WalkerState,
        t: f64,
    ) -> Result<&SolverSolution, SolverError> {
        x.check_finite()?;
        let xv = DVector::from_row_slice(x.to_vector().as_slice());
        let sol = self.slq.solve(&xv, t, self.horizon, self.last.as_ref())?;
        self.last = Some(sol);
        Ok(self.last.as_ref().unwrap())
    }

    pub fn last(&self) -> Option<&SolverSolution> {
        self.last.as_ref()
    }

    pub fn reset(&mut self) {
        self.last = None;
    }
}
