//! Data generation: jobs roll the simulator under the alpha-mixed behavioral
//! policy, solving MPC along the way and emitting replay tuples for the
//! nominal state and Gaussian samples around it.

use nalgebra::{DVector, Vector2, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::model::{
    failure_check, generalized_time, mode_probabilities, relative_state, step, CostTemplate,
    GaitSpec, ModeSchedule, ReferenceTrajectory, WalkerInput, WalkerState,
};
use crate::policy::MenPolicy;
use crate::solver::{mpc_policy_eval, OcpDefinition, SolverSolution, WalkerMpc};
use crate::training::{ReplayTuple, TrainError};

/// Mixing coefficient of the behavioral policy: linear from one at the start
/// of training to zero at the end, clamped to [0, 1].
pub fn alpha_schedule(iteration: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (1.0 - iteration as f64 / total as f64).clamp(0.0, 1.0)
}

/// Behavioral action alpha * pi_mpc + (1 - alpha) * pi.
pub fn behavioral_action(
    alpha: f64,
    sol: &SolverSolution,
    policy: &MenPolicy,
    x: &WalkerState,
    t: f64,
    schedule: &ModeSchedule,
    desired: &ReferenceTrajectory,
) -> Result<WalkerInput, TrainError> {
    let u_mpc = mpc_policy_eval(sol, x, t)?;
    if alpha >= 1.0 {
        return Ok(u_mpc);
    }
    let gt = generalized_time(t, schedule);
    let xr = relative_state(x, &desired.at(t));
    let learned = policy.forward(&gt, &xr).blended;
    let mixed = alpha * u_mpc.to_vector()
        + (1.0 - alpha) * Vector6::from_row_slice(learned.as_slice());
    Ok(WalkerInput::from_vector(&mixed))
}

/// Everything one data-generation run needs besides the policy snapshot.
#[derive(Clone, Debug)]
pub struct DataGenConfig {
    pub dt: f64,
    pub rollout_len: f64,
    pub jobs: usize,
    pub samples_per_emission: usize,
    pub data_decimation: usize,
    pub sample_sigma: f64,
    pub init_pos_sigma: f64,
    pub init_vel_sigma: f64,
    pub command_range: f64,
    pub horizon: f64,
    pub barrier_mu: f64,
    pub barrier_delta: f64,
    pub cost: CostTemplate,
}

/// Per-run diagnostics.
#[derive(Clone, Copy, Debug, Default)]
pub struct GenerationStats {
    pub completed_jobs: usize,
    pub failed_jobs: usize,
    pub solver_failures: usize,
    pub tuples: usize,
}

impl GenerationStats {
    pub fn merge(&mut self, other: &GenerationStats) {
        self.completed_jobs += other.completed_jobs;
        self.failed_jobs += other.failed_jobs;
        self.solver_failures += other.solver_failures;
        self.tuples += other.tuples;
    }
}

/// Runs `jobs` rollouts and returns the surviving jobs' tuples. A job whose
/// rollout fails the height criterion contributes nothing; solver failures
/// skip the job and are counted.
pub fn generate_data(
    cfg: &DataGenConfig,
    gaits: &[GaitSpec],
    policy: &MenPolicy,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<ReplayTuple>, GenerationStats), TrainError> {
    assert!(!gaits.is_empty(), "need at least one gait");
    let steps = (cfg.rollout_len / cfg.dt).round() as usize;
    let command_dist = Uniform::new_inclusive(-cfg.command_range, cfg.command_range)
        .map_err(|e| TrainError::InvalidConfig(format!("command range: {e}")))?;
    let pos_noise = Normal::new(0.0, cfg.init_pos_sigma)
        .map_err(|e| TrainError::InvalidConfig(format!("init pos sigma: {e}")))?;
    let vel_noise = Normal::new(0.0, cfg.init_vel_sigma)
        .map_err(|e| TrainError::InvalidConfig(format!("init vel sigma: {e}")))?;
    let sample_noise = Normal::new(0.0, cfg.sample_sigma)
        .map_err(|e| TrainError::InvalidConfig(format!("sample sigma: {e}")))?;

    let mut out = Vec::new();
    let mut stats = GenerationStats::default();
    for _ in 0..cfg.jobs {
        let gait = &gaits[rng.random_range(0..gaits.len())];
        let schedule = &gait.schedule;
        let command = command_dist.sample(rng);
        let cost = cfg.cost.cost_for(command)?;
        let desired = cost.desired.clone();
        let ocp = OcpDefinition {
            horizon: cfg.horizon,
            cost,
            schedule: schedule.clone(),
            barrier_mu: cfg.barrier_mu,
            barrier_delta: cfg.barrier_delta,
            dt: cfg.dt,
        };
        let mut mpc = WalkerMpc::new(ocp)?;

        let mut x = desired.at(0.0);
        x.base_pos += Vector2::new(pos_noise.sample(rng), pos_noise.sample(rng));
        x.base_vel += Vector2::new(vel_noise.sample(rng), vel_noise.sample(rng));
        x.foot_pos += Vector2::new(pos_noise.sample(rng), pos_noise.sample(rng));

        let mut job_tuples = Vec::new();
        let mut failed = false;
        let mut solver_failed = false;
        for j in 0..steps {
            let t = j as f64 * cfg.dt;
            if j % cfg.data_decimation == 0 {
                if mpc.solve_from(&x, t).is_err() {
                    solver_failed = true;
                    break;
                }
                let sol = mpc.last().expect("solution present after solve");
                emit_tuples(
                    &mut job_tuples,
                    sol,
                    &x,
                    t,
                    schedule,
                    &desired,
                    cfg.samples_per_emission,
                    &sample_noise,
                    rng,
                )?;
            }
            // a numerically exploding rollout is discarded like any other
            // failed job
            let sol = mpc.last().expect("solution present in rollout");
            let stepped = behavioral_action(alpha, sol, policy, &x, t, schedule, &desired)
                .and_then(|u| Ok(step(&x, &u, schedule.mode_at(t), cfg.dt)?));
            match stepped {
                Ok(next) => x = next,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
            if failure_check(&x, &desired.at((j + 1) as f64 * cfg.dt)) {
                failed = true;
                break;
            }
        }
        if solver_failed {
            stats.solver_failures += 1;
        } else if failed {
            stats.failed_jobs += 1;
        } else {
            stats.completed_jobs += 1;
            stats.tuples += job_tuples.len();
            out.extend(job_tuples);
        }
    }
    Ok((out, stats))
}

#[allow(clippy::too_many_arguments)]
fn emit_tuples(
    out: &mut Vec<ReplayTuple>,
    sol: &SolverSolution,
    x: &WalkerState,
    t: f64,
    schedule: &ModeSchedule,
    desired: &ReferenceTrajectory,
    samples: usize,
    sample_noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(), TrainError> {
    let gt = generalized_time(t, schedule);
    let mode = schedule.mode_at(t);
    let mode_probs = mode_probabilities(t, schedule);
    let x_d = desired.at(t);
    let value = &sol.value[0];
    let nu = sol.multipliers[0].clone();
    let dvdt = sol.dvdt[0];

    // nominal tuple: the solve started at x, so the local model is exact here
    out.push(ReplayTuple {
        gt,
        xr: relative_state(x, &x_d),
        x_abs: *x,
        t_abs: t,
        dvdx: Vector6::from_row_slice(value.dvdx.as_slice()),
        dvdt,
        nu: nu.clone(),
        mode,
        mode_probs,
        u_mpc: WalkerInput::from_slice(sol.u_nom[0].as_slice())?,
    });

    // Gaussian samples around the nominal: the value gradient is
    // re-evaluated through the quadratic model, the multipliers stay at
    // their nominal values
    for _ in 0..samples {
        let mut xs = x.to_vector();
        for i in 0..6 {
            xs[i] += sample_noise.sample(rng);
        }
        let xs_state = WalkerState::from_vector(&xs);
        let delta = DVector::from_row_slice((xs - x.to_vector()).as_slice());
        let dvdx_s = &value.dvdx + &value.dvdxx * delta;
        let u_mpc = mpc_policy_eval(sol, &xs_state, t)?;
        out.push(ReplayTuple {
            gt,
            xr: relative_state(&xs_state, &x_d),
            x_abs: xs_state,
            t_abs: t,
            dvdx: Vector6::from_row_slice(dvdx_s.as_slice()),
            dvdt,
            nu: nu.clone(),
            mode,
            mode_probs,
            u_mpc,
        });
    }
    Ok(())
}
