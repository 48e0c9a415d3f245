//! Training-loop behavior on small configurations: emission cadence,
//! discard accounting, determinism, metrics ordering, and the consistency of
//! stored replay tuples with the solver's own Hamiltonian evaluation.

use mpcnet_core::losses::{LossKind, LossVariant};
use mpcnet_core::model::{CostSpec, GaitSpec, ReferenceTrajectory};
use mpcnet_core::policy::{MenConfig, MenPolicy};
use mpcnet_core::solver::{
    eval_problem_hamiltonian, BarrierParams, HamiltonianData, WalkerHamiltonian, WalkerOcp,
};
use mpcnet_core::training::{
    alpha_schedule, behavioral_action, generate_data, metrics_rollout, train, Controller,
    DataGenConfig, RolloutSetup, TrainConfig,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        rollout_len: 0.5,
        jobs: 2,
        iterations: 0,
        gen_every: 500,
        deterministic: true,
        seed: 7,
        policy: MenConfig {
            num_experts: 3,
            expert_hidden: vec![16],
            gating_hidden: vec![8],
            ..MenConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn l3() -> LossKind {
    LossKind { variant: LossVariant::L3, guided: false, lambda: 0.0, beta: 1.0 }
}

#[test]
fn alpha_schedule_endpoints() {
    assert_eq!(alpha_schedule(0, 100), 1.0);
    assert_eq!(alpha_schedule(100, 100), 0.0);
    assert_eq!(alpha_schedule(50, 100), 0.5);
}

#[test]
fn zero_iterations_returns_initial_policy() {
    let cfg = small_config();
    let out = train(&cfg, &[GaitSpec::trot_analog()], &l3()).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.policy.adam_step_count(), 0);
}

#[test]
fn metrics_cadence_counts() {
    let mut cfg = small_config();
    cfg.iterations = 1000;
    cfg.metrics_decimation = 200;
    let out = train(&cfg, &[GaitSpec::trot_analog()], &l3()).unwrap();
    assert_eq!(out.history.len(), 5);
    let iters: Vec<usize> = out.history.iter().map(|r| r.iteration).collect();
    assert_eq!(iters, vec![200, 400, 600, 800, 1000]);
}

#[test]
fn emission_pattern_follows_decimation() {
    // 12 steps with d_d = 4 emit at steps 0, 4, 8: three emissions of
    // (nominal + n_s samples) tuples each
    let cfg = small_config();
    let mut gen = cfg.datagen();
    gen.rollout_len = 12.0 * gen.dt;
    gen.jobs = 1;
    gen.samples_per_emission = 1;
    gen.init_pos_sigma = 1e-6;
    gen.init_vel_sigma = 1e-6;
    let policy = MenPolicy::new(cfg.policy.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (tuples, stats) =
        generate_data(&gen, &[GaitSpec::trot_analog()], &policy, 1.0, &mut rng).unwrap();
    assert_eq!(stats.completed_jobs, 1);
    assert_eq!(tuples.len(), 3 * 2);
    // two tuples per emission share the emission time
    assert_eq!(tuples[0].t_abs, tuples[1].t_abs);
    assert!(tuples[2].t_abs > tuples[1].t_abs);
}

#[test]
fn failed_jobs_are_discarded_entirely() {
    let cfg = small_config();
    let mut gen = cfg.datagen();
    gen.jobs = 8;
    // enormous initial spread: essentially every job starts beyond the
    // failure threshold and dies on its first step
    gen.init_pos_sigma = 10.0;
    let policy = MenPolicy::new(cfg.policy.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (tuples, stats) =
        generate_data(&gen, &[GaitSpec::trot_analog()], &policy, 1.0, &mut rng).unwrap();
    assert_eq!(stats.completed_jobs + stats.failed_jobs + stats.solver_failures, 8);
    // tuple accounting is exact: only completed jobs contribute
    assert_eq!(tuples.len(), stats.tuples);
    let per_job = (gen.rollout_len / gen.dt) as usize / gen.data_decimation * 2;
    assert_eq!(tuples.len(), stats.completed_jobs * per_job);
}

#[test]
fn same_seed_generates_identical_data() {
    let cfg = small_config();
    let gen = cfg.datagen();
    let policy = MenPolicy::new(cfg.policy.clone());
    let gaits = [GaitSpec::walk()];
    let mut rng1 = ChaCha8Rng::seed_from_u64(21);
    let mut rng2 = ChaCha8Rng::seed_from_u64(21);
    let (t1, _) = generate_data(&gen, &gaits, &policy, 0.7, &mut rng1).unwrap();
    let (t2, _) = generate_data(&gen, &gaits, &policy, 0.7, &mut rng2).unwrap();
    assert_eq!(t1.len(), t2.len());
    for (a, b) in t1.iter().zip(t2.iter()) {
        assert_eq!(a.x_abs, b.x_abs);
        assert_eq!(a.u_mpc, b.u_mpc);
        assert_eq!(a.dvdx, b.dvdx);
    }
}

#[test]
fn behavioral_action_endpoints_and_midpoint() {
    let cost = CostSpec::with_default_weights(ReferenceTrajectory::forward(0.2));
    let gait = GaitSpec::trot_analog();
    let ocp = mpcnet_core::solver::OcpDefinition {
        horizon: 0.6,
        cost: cost.clone(),
        schedule: gait.schedule.clone(),
        barrier_mu: 0.1,
        barrier_delta: 0.01,
        dt: 0.0025,
    };
    let x = cost.desired.at(0.0);
    let sol = mpcnet_core::solver::solve(&ocp, &x, 0.0).unwrap();
    let policy = MenPolicy::new(MenConfig { expert_head_scale: 0.0, ..MenConfig::default() });
    // alpha = 1: pure MPC
    let u1 = behavioral_action(1.0, &sol, &policy, &x, 0.0, &gait.schedule, &cost.desired)
        .unwrap();
    let u_mpc = mpcnet_core::solver::mpc_policy_eval(&sol, &x, 0.0).unwrap();
    assert_eq!(u1, u_mpc);
    // alpha = 0: pure learned policy (zero-initialized heads -> zero input)
    let u0 = behavioral_action(0.0, &sol, &policy, &x, 0.0, &gait.schedule, &cost.desired)
        .unwrap();
    assert_eq!(u0.to_vector().amax(), 0.0);
    // alpha = 0.5: exact midpoint
    let uh = behavioral_action(0.5, &sol, &policy, &x, 0.0, &gait.schedule, &cost.desired)
        .unwrap();
    assert!((uh.to_vector() - 0.5 * u_mpc.to_vector()).amax() < 1e-12);
}

#[test]
fn stored_tuples_recompute_the_solver_hamiltonian() {
    // dual route: the walker fast path from the tuple against the generic
    // problem-interface evaluation with the same local model
    let cfg = small_config();
    let mut gen: DataGenConfig = cfg.datagen();
    gen.jobs = 1;
    let policy = MenPolicy::new(cfg.policy.clone());
    let gaits = [GaitSpec::walk()];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (tuples, _) = generate_data(&gen, &gaits, &policy, 1.0, &mut rng).unwrap();
    assert!(!tuples.is_empty());
    let ham = WalkerHamiltonian::new(
        &gen.cost.cost_for(0.0).unwrap(),
        BarrierParams::new(gen.barrier_mu, gen.barrier_delta),
    );
    // a problem with matching weights; the reference does not enter H when
    // the tracking error is supplied through the data
    let problem = WalkerOcp::new(
        gen.cost.cost_for(0.0).unwrap(),
        gaits[0].schedule.clone(),
    );
    for tuple in tuples.iter().take(64) {
        let data = HamiltonianData {
            x: tuple.x_abs.to_vector(),
            x_err: tuple.xr.values,
            t: tuple.t_abs,
            dvdx: tuple.dvdx,
            dvdt: tuple.dvdt,
            nu: tuple.nu.clone(),
            mode: tuple.mode,
        };
        let u = tuple.u_mpc.to_vector();
        let (h_fast, _) = ham.eval(&data, &u);
        // generic route: same state, same multipliers, same value gradient
        let (h_generic, _) = eval_problem_hamiltonian(
            &problem,
            BarrierParams::new(gen.barrier_mu, gen.barrier_delta),
            &DVector::from_row_slice(tuple.x_abs.to_vector().as_slice()),
            &DVector::from_row_slice(u.as_slice()),
            tuple.t_abs,
            &DVector::from_row_slice(tuple.dvdx.as_slice()),
            &tuple.nu,
        );
        // the generic route recomputes the tracking error from its own
        // reference; align them by comparing the u-dependent parts: evaluate
        // both at a second input and compare differences
        let mut u2 = u;
        u2[1] += 5.0;
        u2[4] += 0.2;
        let (h_fast2, _) = ham.eval(&data, &u2);
        let (h_generic2, _) = eval_problem_hamiltonian(
            &problem,
            BarrierParams::new(gen.barrier_mu, gen.barrier_delta),
            &DVector::from_row_slice(tuple.x_abs.to_vector().as_slice()),
            &DVector::from_row_slice(u2.as_slice()),
            tuple.t_abs,
            &DVector::from_row_slice(tuple.dvdx.as_slice()),
            &tuple.nu,
        );
        let fast_diff = h_fast2 - h_fast;
        let generic_diff = h_generic2 - h_generic;
        assert!(
            (fast_diff - generic_diff).abs() <= 1e-8 * fast_diff.abs().max(1.0),
            "u-dependence differs: {fast_diff} vs {generic_diff}"
        );
    }
}

#[test]
fn deterministic_mode_is_bitwise_reproducible() {
    let mut cfg = small_config();
    cfg.iterations = 150;
    cfg.metrics_decimation = 50;
    cfg.gen_every = 100;
    let gaits = [GaitSpec::trot_analog()];
    let a = train(&cfg, &gaits, &l3()).unwrap();
    let b = train(&cfg, &gaits, &l3()).unwrap();
    assert_eq!(a.history, b.history, "metrics histories must be identical");
    for ((_, w1, b1), (_, w2, b2)) in a.policy.tensors().iter().zip(b.policy.tensors()) {
        assert_eq!(**w1, *w2);
        assert_eq!(**b1, *b2);
    }
}

#[test]
fn teacher_outperforms_untrained_policy() {
    let cfg = small_config();
    let cost = cfg.cost.cost_for(cfg.metrics_command).unwrap();
    let setup = RolloutSetup { dt: cfg.dt, duration: 2.0, cost: cost.clone() };
    let gait = GaitSpec::walk();
    // MPC teacher: survives the full duration with negligible violation
    let ocp = mpcnet_core::solver::OcpDefinition {
        horizon: cfg.horizon,
        cost,
        schedule: gait.schedule.clone(),
        barrier_mu: cfg.barrier_mu,
        barrier_delta: cfg.barrier_delta,
        dt: cfg.dt,
    };
    let mut mpc = mpcnet_core::solver::WalkerMpc::new(ocp).unwrap();
    let teacher = metrics_rollout(
        &mut Controller::Mpc { mpc: &mut mpc, resolve_every: cfg.data_decimation },
        &gait,
        &setup,
        0.0,
        5,
    )
    .unwrap();
    assert!(teacher.completed);
    assert!(teacher.survival_time == 2.0);
    assert!(
        teacher.avg_constraint_violation <= 1e-6,
        "teacher violation {:e}",
        teacher.avg_constraint_violation
    );
    // untrained policy: zero output, free fall, fails quickly
    let policy = MenPolicy::new(cfg.policy.clone());
    let learner = metrics_rollout(&mut Controller::Policy(&policy), &gait, &setup, 0.0, 5)
        .unwrap();
    assert!(!learner.completed);
    assert!(learner.survival_time < 0.5, "free fall fails fast");
    assert!(learner.avg_constraint_violation >= teacher.avg_constraint_violation);
    // a failed rollout reports its failure time
    assert!((learner.survival_time / cfg.dt).fract().abs() < 1e-9);
}

#[test]
fn async_training_smoke() {
    let mut cfg = small_config();
    cfg.deterministic = false;
    cfg.threads = 2;
    cfg.iterations = 60;
    cfg.metrics_decimation = 30;
    cfg.startup_timeout = 60.0;
    let out = train(&cfg, &[GaitSpec::trot_analog()], &l3()).unwrap();
    assert_eq!(out.history.len(), 2);
    assert_eq!(out.policy.adam_step_count(), 60);
}
