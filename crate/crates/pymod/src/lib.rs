//! Python bindings: gait encodings, single MPC solves, policy evaluation,
//! and metrics rollouts for the planar hybrid walker.

use nalgebra::Vector6;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mpcnet_core::model::{
    generalized_time, mode_probabilities, relative_state, CostTemplate, GaitSpec, WalkerState,
};
use mpcnet_core::policy::{load_checkpoint, save_checkpoint, MenConfig, MenPolicy};
use mpcnet_core::solver::{solve, OcpDefinition};
use mpcnet_core::training::{metrics_rollout, Controller, RolloutSetup};

fn gait_by_name(name: &str) -> PyResult<GaitSpec> {
    GaitSpec::by_name(name).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn state_from(values: [f64; 6]) -> PyResult<WalkerState> {
    WalkerState::from_slice(&values).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Active contact mode of a gait at time t.
#[pyfunction]
fn mode_at(gait: &str, t: f64) -> PyResult<String> {
    Ok(gait_by_name(gait)?.schedule.mode_at(t).name().to_string())
}

/// Per-leg gait encoding at time t: (phases, phase_rates, bumps).
#[pyfunction]
fn gait_phases(gait: &str, t: f64) -> PyResult<([f64; 2], [f64; 2], [f64; 2])> {
    let gt = generalized_time(t, &gait_by_name(gait)?.schedule);
    Ok((gt.phases, gt.phase_rates, gt.bumps))
}

/// One-hot empirical mode probabilities at time t.
#[pyfunction]
fn mode_probs(gait: &str, t: f64) -> PyResult<[f64; 3]> {
    Ok(mode_probabilities(t, &gait_by_name(gait)?.schedule))
}

/// One receding-horizon solve from the given state.
///
/// Returns a dict with times, x_nom, u_nom, gains-free feedback data being
/// internal; cost, iterations, and convergence are reported.
#[pyfunction]
#[pyo3(signature = (gait, state, t_start=0.0, command=0.0, horizon=0.6, dt=0.0025))]
fn solve_walker(
    py: Python<'_>,
    gait: &str,
    state: [f64; 6],
    t_start: f64,
    command: f64,
    horizon: f64,
    dt: f64,
) -> PyResult<Py<PyDict>> {
    let gait = gait_by_name(gait)?;
    let template = CostTemplate::default();
    let cost = template.cost_for(command).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let ocp = OcpDefinition {
        horizon,
        cost,
        schedule: gait.schedule.clone(),
        barrier_mu: 0.004,
        barrier_delta: 0.01,
        dt,
    };
    let x = state_from(state)?;
    let sol = solve(&ocp, &x, t_start).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("times", sol.times.clone())?;
    out.set_item(
        "x_nom",
        sol.x_nom.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "u_nom",
        sol.u_nom.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>(),
    )?;
    out.set_item("dvdt", sol.dvdt.clone())?;
    out.set_item("total_cost", sol.total_cost)?;
    out.set_item("iterations", sol.iterations)?;
    out.set_item("converged", sol.converged)?;
    Ok(out.into())
}

/// Mixture-of-experts policy handle.
#[pyclass]
struct Policy {
    inner: MenPolicy,
}

#[pymethods]
impl Policy {
    /// Fresh policy with the default architecture.
    #[new]
    #[pyo3(signature = (experts=4, seed=0))]
    fn new(experts: usize, seed: u64) -> PyResult<Self> {
        let config = MenConfig { num_experts: experts, seed, ..MenConfig::default() };
        Ok(Self { inner: MenPolicy::new(config) })
    }

    /// Loads a checkpoint written by the trainer or by `save`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = load_checkpoint(std::path::Path::new(path))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, std::path::Path::new(path))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn num_experts(&self) -> usize {
        self.inner.num_experts()
    }

    #[getter]
    fn parameters(&self) -> usize {
        self.inner.param_count()
    }

    /// Policy action for an absolute state on a gait at time t; returns
    /// (action, gating_probabilities).
    #[pyo3(signature = (gait, t, state, command=0.0))]
    fn act(
        &self,
        gait: &str,
        t: f64,
        state: [f64; 6],
        command: f64,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let gait = gait_by_name(gait)?;
        let template = CostTemplate::default();
        let cost =
            template.cost_for(command).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let x = state_from(state)?;
        let gt = generalized_time(t, &gait.schedule);
        let xr = relative_state(&x, &cost.desired.at(t));
        let trace = self.inner.forward(&gt, &xr);
        Ok((trace.blended.as_slice().to_vec(), trace.p.as_slice().to_vec()))
    }

    /// Raw forward pass on explicit inputs; returns (action, probabilities).
    fn forward(&self, gt: [f64; 6], xr: [f64; 6]) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let gt = mpcnet_core::model::GeneralizedTime {
            phases: [gt[0], gt[1]],
            phase_rates: [gt[2], gt[3]],
            bumps: [gt[4], gt[5]],
        };
        let xr = mpcnet_core::model::RelativeState { values: Vector6::from_row_slice(&xr) };
        let trace = self.inner.forward(&gt, &xr);
        Ok((trace.blended.as_slice().to_vec(), trace.p.as_slice().to_vec()))
    }

    /// Rolls the policy on the simulator and reports
    /// (survival_time, constraint_violation, incurred_cost, completed).
    #[pyo3(signature = (gait, duration=4.0, disturbance=0.0, command=0.3, seed=0))]
    fn rollout(
        &self,
        gait: &str,
        duration: f64,
        disturbance: f64,
        command: f64,
        seed: u64,
    ) -> PyResult<(f64, f64, f64, bool)> {
        let gait = gait_by_name(gait)?;
        let template = CostTemplate::default();
        let cost =
            template.cost_for(command).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let setup = RolloutSetup { dt: 0.0025, duration, cost };
        let record = metrics_rollout(
            &mut Controller::Policy(&self.inner),
            &gait,
            &setup,
            disturbance,
            seed,
        )
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok((
            record.survival_time,
            record.avg_constraint_violation,
            record.incurred_cost,
            record.completed,
        ))
    }
}

#[pymodule]
fn mpcnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mode_at, m)?)?;
    m.add_function(wrap_pyfunction!(gait_phases, m)?)?;
    m.add_function(wrap_pyfunction!(mode_probs, m)?)?;
    m.add_function(wrap_pyfunction!(solve_walker, m)?)?;
    m.add_class::<Policy>()?;
    Ok(())
}
