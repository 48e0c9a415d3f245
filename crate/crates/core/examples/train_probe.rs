use mpcnet_core::losses::{LossKind, LossVariant};
use mpcnet_core::model::GaitSpec;
use mpcnet_core::training::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let deterministic = args.get(2).map(|s| s == "det").unwrap_or(true);
    let mut cfg = TrainConfig::default();
    cfg.iterations = iters;
    cfg.deterministic = deterministic;
    cfg.seed = 42;
    cfg.gen_every = 1000;
    let loss = LossKind { variant: LossVariant::L3, guided: false, lambda: 0.0, beta: 1.0 };
    let gaits = [GaitSpec::trot_analog()];
    let t0 = std::time::Instant::now();
    let out = train(&cfg, &gaits, &loss).unwrap();
    println!("trained {} iters in {:?}; gen stats: {:?}", iters, t0.elapsed(), out.stats);
    for rec in out.history.iter().rev().take(10).collect::<Vec<_>>().iter().rev() {
        println!(
            "iter {:6}: survival {:5.2} s  violation {:9.3e}  cost {:9.3}  completed {}",
            rec.iteration, rec.survival_time, rec.avg_constraint_violation, rec.incurred_cost, rec.completed
        );
    }
    let full: usize = out.history.iter().rev().take(10).filter(|r| r.completed).count();
    println!("completed in final 10 rollouts: {full}/10");
}
