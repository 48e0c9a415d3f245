//! Robustness benchmark: MPC teacher, MPC-Net (L3), and behavioral cloning
//! evaluated on disturbance rollouts of increasing magnitude.

use std::path::Path;

use crate::bench::report::{fmt, run_parallel, write_csv, write_summary, CheckResult};
use crate::bench::{BenchConfig, BenchError};
use crate::losses::{LossKind, LossVariant};
use crate::model::GaitSpec;
use crate::policy::MenPolicy;
use crate::solver::{OcpDefinition, WalkerMpc};
use crate::training::{metrics_rollout, train, Controller, RolloutSetup, TrainConfig, TrainError};

/// One row of the survival table.
#[derive(Clone, Debug)]
pub struct SurvivalRow {
    pub scale: f64,
    pub controller: String,
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

#[derive(Debug)]
pub struct BcOutcome {
    pub rows: Vec<SurvivalRow>,
    pub checks: Vec<CheckResult>,
}

fn survival_stats(times: &[f64]) -> (f64, f64) {
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains MPC-Net and BC policies per seed, then measures survival under
/// disturbance impulses for both plus the MPC teacher. Writes `bc.csv`,
/// `bc_runs.csv`, and `bc_summary.txt`.
pub fn run_bc_benchmark(
    base: &TrainConfig,
    bench: &BenchConfig,
    gait: &GaitSpec,
    out_dir: &Path,
) -> Result<BcOutcome, BenchError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| BenchError::Io { path: out_dir.to_path_buf(), source: e })?;
    let losses = [
        ("mpcnet", LossKind { variant: LossVariant::L3, guided: false, lambda: 0.0, beta: 1.0 }),
        ("bc", LossKind { variant: LossVariant::Bc, guided: false, lambda: 0.0, beta: 1.0 }),
    ];

    // one training job per (loss, seed)
    struct TrainJob {
        controller: &'static str,
        loss: LossKind,
        seed: u64,
    }
    let jobs: Vec<TrainJob> = losses
        .iter()
        .flat_map(|(name, loss)| {
            bench.seeds.iter().map(move |&seed| TrainJob { controller: name, loss: *loss, seed })
        })
        .collect();
    let trained: Vec<Result<MenPolicy, BenchError>> =
        run_parallel(jobs.len(), bench.parallelism, |i| {
            let job = &jobs[i];
            let mut cfg = base.clone();
            cfg.seed = job.seed;
            cfg.deterministic = true;
            let outcome = train(&cfg, std::slice::from_ref(gait), &job.loss)?;
            Ok(outcome.policy)
        });
    let mut policies: Vec<(&'static str, MenPolicy)> = Vec::new();
    for (job, result) in jobs.iter().zip(trained) {
        policies.push((job.controller, result?));
    }

    let setup = RolloutSetup {
        dt: base.dt,
        duration: bench.eval_duration,
        cost: base
            .cost
            .cost_for(base.metrics_command)
            .map_err(TrainError::from)?,
    };

    let mut rows = Vec::new();
    let mut run_rows: Vec<String> = Vec::new();
    for (si, &scale) in bench.scales.iter().enumerate() {
        // learned controllers: pool eval runs across seeds; disturbance
        // seeds are shared across controllers so comparisons are paired
        for (name, _) in &losses {
            let evals: Vec<(usize, &MenPolicy)> = policies
                .iter()
                .filter(|(n, _)| n == name)
                .flat_map(|(_, p)| (0..bench.eval_runs).map(move |r| (r, p)))
                .collect();
            let survivals = run_parallel(evals.len(), bench.parallelism, |i| {
                let (run, policy) = evals[i];
                let record = metrics_rollout(
                    &mut Controller::Policy(policy),
                    gait,
                    &setup,
                    scale,
                    disturbance_seed(si, run),
                )
                .expect("policy rollouts are total");
                record.survival_time
            });
            for (i, s) in survivals.iter().enumerate() {
                run_rows.push(format!("{},{},{},{}", fmt(scale), name, i, fmt(*s)));
            }
            let (mean, sd) = survival_stats(&survivals);
            rows.push(SurvivalRow {
                scale,
                controller: name.to_string(),
                mean,
                sd,
                runs: survivals.len(),
            });
        }
        // the MPC teacher as upper reference
        let teacher: Vec<f64> = run_parallel(bench.eval_runs, bench.parallelism, |run| {
            let ocp = OcpDefinition {
                horizon: base.horizon,
                cost: setup.cost.clone(),
                schedule: gait.schedule.clone(),
                barrier_mu: base.barrier_mu,
                barrier_delta: base.barrier_delta,
                dt: base.dt,
            };
            let mut mpc = WalkerMpc::new(ocp).expect("valid teacher problem");
            let record = metrics_rollout(
                &mut Controller::Mpc { mpc: &mut mpc, resolve_every: base.data_decimation },
                gait,
                &setup,
                scale,
                disturbance_seed(si, run),
            )
            .expect("teacher rollout");
            record.survival_time
        });
        for (i, s) in teacher.iter().enumerate() {
            run_rows.push(format!("{},mpc,{},{}", fmt(scale), i, fmt(*s)));
        }
        let (mean, sd) = survival_stats(&teacher);
        rows.push(SurvivalRow {
            scale,
            controller: "mpc".to_string(),
            mean,
            sd,
            runs: teacher.len(),
        });
    }

    let mean_of = |controller: &str, scale: f64| -> f64 {
        rows.iter()
            .find(|r| r.controller == controller && r.scale == scale)
            .map(|r| r.mean)
            .unwrap_or(f64::NAN)
    };
    let mut checks = Vec::new();
    let zero_ok = rows
        .iter()
        .filter(|r| r.scale == 0.0)
        .all(|r| (r.mean - bench.eval_duration).abs() < 1e-9 && r.sd < 1e-9);
    checks.push(CheckResult::new(
        "all controllers reach full duration at scale 0",
        zero_ok,
        rows.iter()
            .filter(|r| r.scale == 0.0)
            .map(|r| format!("{} {:.2}+-{:.2}", r.controller, r.mean, r.sd))
            .collect::<Vec<_>>()
            .join(", "),
    ));
    let top = bench.scales.iter().cloned().fold(0.0f64, f64::max);
    checks.push(CheckResult::new(
        "mpcnet mean survival >= bc mean survival at the largest scale",
        mean_of("mpcnet", top) >= mean_of("bc", top),
        format!("mpcnet {:.2} vs bc {:.2} at scale {top}", mean_of("mpcnet", top), mean_of("bc", top)),
    ));

    let csv: Vec<String> = rows
        .iter()
        .map(|r| {
            format!("{},{},{},{},{}", fmt(r.scale), r.controller, fmt(r.mean), fmt(r.sd), r.runs)
        })
        .collect();
    write_csv(&out_dir.join("bc.csv"), "scale,controller,mean_survival,sd_survival,runs", &csv)?;
    write_csv(&out_dir.join("bc_runs.csv"), "scale,controller,run,survival", &run_rows)?;
    write_summary(&out_dir.join("bc_summary.txt"), &checks)?;
    Ok(BcOutcome { rows, checks })
}

fn disturbance_seed(scale_index: usize, run: usize) -> u64 {
    0xD157 ^ ((scale_index as u64) << 32) ^ (run as u64)
}
