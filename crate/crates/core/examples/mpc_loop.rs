//! Receding-horizon MPC loop on the walk gait: re-solve every few steps,
//! apply the feedback policy in between, report timing and tracking.
//!
//! Run with: cargo run --release -p mpcnet-core --example mpc_loop

use mpcnet_core::model::{step, CostSpec, GaitSpec, ReferenceTrajectory};
use mpcnet_core::solver::{mpc_policy_eval, OcpDefinition, WalkerMpc};

fn main() {
    let reference = ReferenceTrajectory::forward(0.3);
    let ocp = OcpDefinition {
        horizon: 0.6,
        cost: CostSpec::with_default_weights(reference.clone()),
        schedule: GaitSpec::walk().schedule.clone(),
        barrier_mu: 0.1,
        barrier_delta: 0.01,
        dt: 0.0025,
    };
    let mut mpc = WalkerMpc::new(ocp.clone()).unwrap();
    let mut x = reference.at(0.0);
    x.base_pos.y += 0.03;
    let dt = ocp.dt;
    let steps = 1600; // 4 s
    let started = std::time::Instant::now();
    let mut solves = 0usize;
    let mut iters = 0usize;
    for j in 0..steps {
        let t = j as f64 * dt;
        if j % 4 == 0 {
            let sol = mpc.solve_from(&x, t).unwrap();
            solves += 1;
            iters += sol.iterations;
        }
        let u = mpc_policy_eval(mpc.last().unwrap(), &x, t).unwrap();
        x = step(&x, &u, ocp.schedule.mode_at(t), dt).unwrap();
    }
    let elapsed = started.elapsed();
    println!(
        "4 s rollout: {} solves, {:.2} iters/solve, total {:?} ({:?}/solve)",
        solves,
        iters as f64 / solves as f64,
        elapsed,
        elapsed / solves as u32,
    );
    println!(
        "final state: x = {:.3} m (reference {:.3}), z = {:.4} m",
        x.base_pos.x,
        reference.at(steps as f64 * dt).base_pos.x,
        x.base_pos.y
    );
}
