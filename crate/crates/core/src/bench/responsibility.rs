//! Single-responsibility statistic: does each mode of the gait have exactly
//! one dominant expert, with no expert dominating two modes?

use crate::model::{generalized_time, relative_state, GaitSpec, Mode};
use crate::policy::MenPolicy;
use crate::solver::{mpc_policy_eval, OcpDefinition, WalkerMpc};
use crate::training::{TrainConfig, TrainError};

/// Per-gait expert-selection report.
#[derive(Clone, Debug)]
pub struct ResponsibilityReport {
    /// One entry per observed mode: (mode, dominant expert, mean dominant
    /// weight).
    pub assignment: Vec<(Mode, usize, f64)>,
    /// True iff the mode -> dominant-expert map is injective and every mean
    /// dominant weight reaches the threshold.
    pub single_responsibility: bool,
}

/// Evaluates gating weights over (t, x) pairs sampled from a teacher rollout
/// and applies the injectivity-plus-threshold rule.
pub fn responsibility_stats(
    policy: &MenPolicy,
    gait: &GaitSpec,
    cfg: &TrainConfig,
    n_eval_points: usize,
    threshold: f64,
) -> Result<ResponsibilityReport, TrainError> {
    let cost = cfg.cost.cost_for(cfg.metrics_command)?;
    let desired = cost.desired.clone();
    let ocp = OcpDefinition {
        horizon: cfg.horizon,
        cost,
        schedule: gait.schedule.clone(),
        barrier_mu: cfg.barrier_mu,
        barrier_delta: cfg.barrier_delta,
        dt: cfg.dt,
    };
    let mut mpc = WalkerMpc::new(ocp)?;

    // teacher rollout spanning at least two gait cycles
    let duration = (2.0 * gait.schedule.cycle_duration()).max(2.0);
    let steps = (duration / cfg.dt).round() as usize;
    let stride = (steps / n_eval_points.max(1)).max(1);
    let mut x = desired.at(0.0);
    let experts = policy.num_experts();
    let mut sums: Vec<(Mode, Vec<f64>, usize)> = gait
        .schedule
        .observed_modes()
        .into_iter()
        .map(|m| (m, vec![0.0; experts], 0))
        .collect();
    for j in 0..steps {
        let t = j as f64 * cfg.dt;
        if j % cfg.data_decimation == 0 {
            mpc.solve_from(&x, t)?;
        }
        if j % stride == 0 {
            let gt = generalized_time(t, &gait.schedule);
            let xr = relative_state(&x, &desired.at(t));
            let p = policy.gating_probs(&gt, &xr);
            let mode = gait.schedule.mode_at(t);
            if let Some(entry) = sums.iter_mut().find(|(m, _, _)| *m == mode) {
                for (acc, pi) in entry.1.iter_mut().zip(p.iter()) {
                    *acc += pi;
                }
                entry.2 += 1;
            }
        }
        let u = mpc_policy_eval(mpc.last().expect("solved"), &x, t)?;
        x = crate::model::step(&x, &u, gait.schedule.mode_at(t), cfg.dt)?;
    }

    let mut assignment = Vec::new();
    for (mode, acc, count) in &sums {
        if *count == 0 {
            continue;
        }
        let mean: Vec<f64> = acc.iter().map(|v| v / *count as f64).collect();
        let dominant = mean
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assignment.push((*mode, dominant, mean[dominant]));
    }
    let injective = {
        let mut seen = Vec::new();
        assignment.iter().all(|(_, e, _)| {
            if seen.contains(e) {
                false
            } else {
                seen.push(*e);
                true
            }
        })
    };
    let strong = assignment.iter().all(|(_, _, w)| *w >= threshold);
    Ok(ResponsibilityReport { assignment, single_responsibility: injective && strong })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GENERALIZED_TIME_DIM;
    use crate::policy::{GaitInput, MenConfig};

    fn base_cfg() -> TrainConfig {
        TrainConfig {
            policy: MenConfig {
                num_experts: 3,
                gating_hidden: vec![],
                expert_hidden: vec![8],
                gait_input: GaitInput::Full,
                ..MenConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    /// Linear gating crafted from the phase rates: expert 0 fires in stance,
    /// experts 1 and 2 during the respective swings.
    fn one_hot_policy() -> MenPolicy {
        let mut policy = MenPolicy::new(base_cfg().policy);
        let (w, b) = policy.tensor_mut("gating.0").unwrap();
        w.fill(0.0);
        b.fill(0.0);
        let c = 30.0;
        // logits: e1 = c (0.6 rate1 - 1), e2 = c (0.6 rate2 - 1), e0 = 0
        w[(1, 2)] = 0.6 * c; // phase rate foot 1
        b[1] = -c;
        w[(2, 3)] = 0.6 * c; // phase rate foot 2
        b[2] = -c;
        policy
    }

    #[test]
    fn crafted_one_hot_gating_is_single_responsibility() {
        let cfg = base_cfg();
        let policy = one_hot_policy();
        for gait in [GaitSpec::walk(), GaitSpec::trot_analog()] {
            let report = responsibility_stats(&policy, &gait, &cfg, 200, 0.8).unwrap();
            assert!(report.single_responsibility, "{}: {:?}", gait.name, report.assignment);
        }
    }

    #[test]
    fn uniform_gating_fails_threshold() {
        let cfg = base_cfg();
        let mut policy = MenPolicy::new(cfg.policy.clone());
        let (w, b) = policy.tensor_mut("gating.0").unwrap();
        w.fill(0.0);
        b.fill(0.0);
        let report =
            responsibility_stats(&policy, &GaitSpec::walk(), &cfg, 100, 0.8).unwrap();
        assert!(!report.single_responsibility);
        for (_, _, weight) in &report.assignment {
            assert!((*weight - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shared_dominant_expert_fails_injectivity() {
        let cfg = base_cfg();
        let mut policy = MenPolicy::new(cfg.policy.clone());
        let (w, b) = policy.tensor_mut("gating.0").unwrap();
        w.fill(0.0);
        b.fill(0.0);
        // both swing modes point at expert 1
        let c = 30.0;
        w[(1, 2)] = 0.6 * c;
        w[(1, 3)] = 0.6 * c;
        b[1] = -c;
        assert_eq!(GENERALIZED_TIME_DIM, 6);
        let report =
            responsibility_stats(&policy, &GaitSpec::trot_analog(), &cfg, 200, 0.8).unwrap();
        // swing1 and swing2 share expert 1: dominant but not injective
        assert!(!report.single_responsibility);
    }
}
