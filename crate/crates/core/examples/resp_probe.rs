use mpcnet_core::bench::responsibility_stats;
use mpcnet_core::losses::{LossKind, LossVariant};
use mpcnet_core::model::GaitSpec;
use mpcnet_core::training::{metrics_rollout, train, Controller, RolloutSetup, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let variant = args.get(2).cloned().unwrap_or_else(|| "l3".into());
    let gait_name = args.get(3).cloned().unwrap_or_else(|| "walk".into());
    let seeds: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(3);

    let gait = GaitSpec::by_name(&gait_name).unwrap();
    for seed in 0..seeds {
        let mut cfg = TrainConfig::default();
        cfg.iterations = iters;
        cfg.deterministic = true;
        cfg.seed = seed;
        cfg.rollout_len = 2.0;
        cfg.jobs = 6;
        cfg.gen_every = 800;
        let loss = match variant.as_str() {
            "l2" => LossKind { variant: LossVariant::L2, guided: false, lambda: 0.0, beta: 1.0 },
            "l3b2" => LossKind { variant: LossVariant::L3, guided: false, lambda: 0.0, beta: 2.0 },
            _ => LossKind { variant: LossVariant::L3, guided: false, lambda: 0.0, beta: 1.0 },
        };
        let t0 = std::time::Instant::now();
        let out = train(&cfg, std::slice::from_ref(&gait), &loss).unwrap();
        let resp = responsibility_stats(&out.policy, &gait, &cfg, 400, 0.8).unwrap();
        let setup = RolloutSetup {
            dt: cfg.dt,
            duration: cfg.rollout_len,
            cost: cfg.cost.cost_for(cfg.metrics_command).unwrap(),
        };
        let rec = metrics_rollout(&mut Controller::Policy(&out.policy), &gait, &setup, 0.0, 99)
            .unwrap();
        println!(
            "{variant} {gait_name} seed {seed}: single_resp={} assign={:?} survival={:.2} violation={:.3} ({:.0?})",
            resp.single_responsibility,
            resp.assignment.iter().map(|(m, e, w)| format!("{}->{e}@{w:.2}", m.name())).collect::<Vec<_>>(),
            rec.survival_time,
            rec.avg_constraint_violation,
            t0.elapsed()
        );
    }
}
