//! Metrics rollouts: run a controller on the simulator for a fixed task and
//! record the average constraint violation, the incurred cost, and the
//! survival time. Optional velocity impulses at Poisson-timed instants stand
//! in for rough terrain.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::model::{
    failure_check, generalized_time, mode_constraints, relative_state, step, CostSpec, GaitSpec,
    WalkerInput,
};
use crate::policy::MenPolicy;
use crate::solver::{mpc_policy_eval, WalkerMpc};
use crate::training::TrainError;

/// Outcome of one evaluation rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    /// Mean L2 norm of the equality residual g(x, u, t) per executed step.
    pub avg_constraint_violation: f64,
    /// Final cost plus the integral of the intermediate cost over the
    /// survived span.
    pub incurred_cost: f64,
    pub survival_time: f64,
    pub completed: bool,
}

/// The controller under evaluation: the learned policy or the MPC teacher
/// (re-solved every `resolve_every` steps).
pub enum Controller<'a> {
    Policy(&'a MenPolicy),
    Mpc { mpc: &'a mut WalkerMpc, resolve_every: usize },
}

/// Rollout parameters for one evaluation.
#[derive(Clone, Debug)]
pub struct RolloutSetup {
    pub dt: f64,
    pub duration: f64,
    pub cost: CostSpec,
}

/// Rolls the controller for up to `setup.duration` seconds. At Poisson-timed
/// instants (rate 1 per second) a planar velocity impulse of magnitude
/// `disturbance_scale` hits the base.
pub fn metrics_rollout(
    controller: &mut Controller,
    gait: &GaitSpec,
    setup: &RolloutSetup,
    disturbance_scale: f64,
    seed: u64,
) -> Result<MetricsRecord, TrainError> {
    let schedule = &gait.schedule;
    let desired = setup.cost.desired.clone();
    let steps = (setup.duration / setup.dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0).expect("unit rate is valid");
    let mut next_impulse = if disturbance_scale > 0.0 { exp.sample(&mut rng) } else { f64::INFINITY };

    let mut x = desired.at(0.0);
    if let Controller::Mpc { mpc, .. } = controller {
        mpc.reset();
    }
    let mut violation_sum = 0.0;
    let mut cost_sum = 0.0;
    let mut executed = 0usize;
    let mut survival = setup.duration;
    let mut completed = true;
    for j in 0..steps {
        let t = j as f64 * setup.dt;
        if t >= next_impulse {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            x.base_vel += disturbance_scale * Vector2::new(angle.cos(), angle.sin());
            next_impulse += exp.sample(&mut rng);
        }
        let u = match controller {
            Controller::Policy(policy) => {
                let gt = generalized_time(t, schedule);
                let xr = relative_state(&x, &desired.at(t));
                WalkerInput::from_slice(policy.forward(&gt, &xr).blended.as_slice())?
            }
            Controller::Mpc { mpc, resolve_every } => {
                if j % *resolve_every == 0 {
                    mpc.solve_from(&x, t)?;
                }
                mpc_policy_eval(mpc.last().expect("solved above"), &x, t)?
            }
        };
        let mode = schedule.mode_at(t);
        let (gx, gu, g0) = mode_constraints(mode);
        let xv = nalgebra::DVector::from_row_slice(x.to_vector().as_slice());
        let uv = nalgebra::DVector::from_row_slice(u.to_vector().as_slice());
        violation_sum += (gx * xv + gu * uv + g0).norm();
        cost_sum += setup.cost.stage(&x.to_vector(), &u.to_vector(), t) * setup.dt;
        executed += 1;

        x = step(&x, &u, mode, setup.dt)?;
        let t_next = (j + 1) as f64 * setup.dt;
        if failure_check(&x, &desired.at(t_next)) {
            survival = t_next;
            completed = false;
            break;
        }
    }
    let incurred_cost = cost_sum + setup.cost.terminal(&x.to_vector(), executed as f64 * setup.dt);
    Ok(MetricsRecord {
        iteration: 0,
        avg_constraint_violation: if executed > 0 { violation_sum / executed as f64 } else { 0.0 },
        incurred_cost,
        survival_time: survival,
        completed,
    })
}
