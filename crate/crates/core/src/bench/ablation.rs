//! L2-vs-L3 ablation over both gaits with single-responsibility statistics,
//! plus the gait-parametrization ablation (full generalized time against
//! sinusoidal bumps only).

use std::path::Path;

use crate::bench::report::{fmt, run_parallel, write_csv, write_summary, CheckResult};
use crate::bench::responsibility::responsibility_stats;
use crate::bench::{BenchConfig, BenchError};
use crate::losses::{LossKind, LossVariant};
use crate::model::GaitSpec;
use crate::policy::GaitInput;
use crate::training::{metrics_rollout, train, Controller, RolloutSetup, TrainConfig};

/// One training run's result row.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub loss: String,
    pub beta: f64,
    pub gait: String,
    pub seed: u64,
    pub single_resp: bool,
    pub violation: f64,
    pub survival: f64,
}

#[derive(Debug)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    /// (cell label, gait, single-responsibility percentage).
    pub rates: Vec<(String, String, f64)>,
    pub checks: Vec<CheckResult>,
    pub failures: usize,
}

struct Cell {
    label: &'static str,
    variant: LossVariant,
    beta: f64,
    gait_input: GaitInput,
    gaits: &'static [&'static str],
}

const CELLS: &[Cell] = &[
    Cell { label: "l2", variant: LossVariant::L2, beta: 1.0, gait_input: GaitInput::Full, gaits: &["walk", "trot-analog"] },
    Cell { label: "l3_b0.5", variant: LossVariant::L3, beta: 0.5, gait_input: GaitInput::Full, gaits: &["walk", "trot-analog"] },
    Cell { label: "l3_b1.0", variant: LossVariant::L3, beta: 1.0, gait_input: GaitInput::Full, gaits: &["walk", "trot-analog"] },
    Cell { label: "l3_b2.0", variant: LossVariant::L3, beta: 2.0, gait_input: GaitInput::Full, gaits: &["walk", "trot-analog"] },
    Cell { label: "l3_full", variant: LossVariant::L3, beta: 1.0, gait_input: GaitInput::Full, gaits: &["walk"] },
    Cell { label: "l3_bumps", variant: LossVariant::L3, beta: 1.0, gait_input: GaitInput::BumpsOnly, gaits: &["walk"] },
];

/// Runs one training cell and measures its final metrics and responsibility.
pub(crate) fn run_single(
    base: &TrainConfig,
    bench: &BenchConfig,
    gait: &GaitSpec,
    loss: &LossKind,
    gait_input: GaitInput,
    seed: u64,
    iterations: usize,
) -> Result<(bool, f64, f64), BenchError> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.deterministic = true;
    cfg.iterations = iterations;
    cfg.policy.gait_input = gait_input;
    let outcome = train(&cfg, std::slice::from_ref(gait), loss)?;
    let setup = RolloutSetup {
        dt: cfg.dt,
        duration: cfg.rollout_len,
        cost: cfg.cost.cost_for(cfg.metrics_command).map_err(crate::training::TrainError::from)?,
    };
    let record = metrics_rollout(
        &mut Controller::Policy(&outcome.policy),
        gait,
        &setup,
        0.0,
        seed ^ 0xEA71,
    )?;
    let resp = responsibility_stats(
        &outcome.policy,
        gait,
        &cfg,
        bench.responsibility_points,
        bench.responsibility_threshold,
    )?;
    Ok((resp.single_responsibility, record.avg_constraint_violation, record.survival_time))
}

/// Trains every cell of the ablation grid over the benchmark seeds and
/// writes `ablation.csv` plus `ablation_summary.txt`.
pub fn run_ablation(
    base: &TrainConfig,
    bench: &BenchConfig,
    out_dir: &Path,
) -> Result<AblationOutcome, BenchError> {
    if bench.seeds.len() < 2 {
        return Err(BenchError::TooFewSeeds { needed: 2, got: bench.seeds.len() });
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| BenchError::Io { path: out_dir.to_path_buf(), source: e })?;

    struct Job {
        label: String,
        beta: f64,
        gait: String,
        gait_input: GaitInput,
        variant: LossVariant,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for cell in CELLS {
        for gait in cell.gaits {
            for &seed in &bench.seeds {
                jobs.push(Job {
                    label: cell.label.to_string(),
                    beta: cell.beta,
                    gait: gait.to_string(),
                    gait_input: cell.gait_input,
                    variant: cell.variant,
                    seed,
                });
            }
        }
    }

    let results = run_parallel(jobs.len(), bench.parallelism, |i| {
        let job = &jobs[i];
        let gait = GaitSpec::by_name(&job.gait).expect("builtin gait");
        let loss = LossKind { variant: job.variant, guided: false, lambda: 0.0, beta: job.beta };
        run_single(base, bench, &gait, &loss, job.gait_input, job.seed, base.iterations)
    });

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok((single_resp, violation, survival)) => rows.push(AblationRow {
                loss: job.label.clone(),
                beta: job.beta,
                gait: job.gait.clone(),
                seed: job.seed,
                single_resp,
                violation,
                survival,
            }),
            Err(_) => failures += 1,
        }
    }

    // per-cell aggregates
    let mut rates = Vec::new();
    for cell in CELLS {
        for gait in cell.gaits {
            let cell_rows: Vec<&AblationRow> =
                rows.iter().filter(|r| r.loss == cell.label && r.gait == *gait).collect();
            if cell_rows.is_empty() {
                continue;
            }
            let rate = 100.0 * cell_rows.iter().filter(|r| r.single_resp).count() as f64
                / cell_rows.len() as f64;
            rates.push((cell.label.to_string(), gait.to_string(), rate));
        }
    }

    let rate_of = |label: &str, gait: &str| -> f64 {
        rates
            .iter()
            .find(|(l, g, _)| l == label && g == gait)
            .map(|(_, _, r)| *r)
            .unwrap_or(f64::NAN)
    };
    let mean_violation = |label: &str| -> f64 {
        let vs: Vec<f64> =
            rows.iter().filter(|r| r.loss == label).map(|r| r.violation).collect();
        vs.iter().sum::<f64>() / vs.len().max(1) as f64
    };

    let mut checks = Vec::new();
    for gait in ["walk", "trot-analog"] {
        let l3 = rate_of("l3_b1.0", gait);
        let l2 = rate_of("l2", gait);
        checks.push(CheckResult::new(
            &format!("l3(beta=1) single-responsibility rate >= l2 rate on {gait}"),
            l3 >= l2,
            format!("l3 {l3:.0}% vs l2 {l2:.0}%"),
        ));
    }
    checks.push(CheckResult::new(
        "l3(beta=1) single-responsibility rate >= 70%",
        rate_of("l3_b1.0", "walk") >= 70.0 && rate_of("l3_b1.0", "trot-analog") >= 70.0,
        format!(
            "walk {:.0}%, trot-analog {:.0}%",
            rate_of("l3_b1.0", "walk"),
            rate_of("l3_b1.0", "trot-analog")
        ),
    ));
    let full = mean_violation("l3_full");
    let bumps = mean_violation("l3_bumps");
    checks.push(CheckResult::new(
        "full generalized time beats bumps-only on constraint violation",
        full < bumps,
        format!("full {full:.4} vs bumps {bumps:.4}"),
    ));

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.loss,
                fmt(r.beta),
                r.gait,
                r.seed,
                r.single_resp,
                fmt(r.violation),
                fmt(r.survival)
            )
        })
        .collect();
    write_csv(
        &out_dir.join("ablation.csv"),
        "loss,beta,gait,seed,single_resp,violation,survival",
        &csv_rows,
    )?;
    let mut summary = checks.clone();
    for (label, gait, rate) in &rates {
        summary.push(CheckResult::new(
            &format!("rate {label} on {gait}"),
            true,
            format!("{rate:.0}%"),
        ));
    }
    if failures > 0 {
        summary.push(CheckResult::new(
            "run failures",
            false,
            format!("{failures} of {} runs failed", jobs.len()),
        ));
    }
    write_summary(&out_dir.join("ablation_summary.txt"), &summary)?;

    Ok(AblationOutcome { rows, rates, checks, failures })
}
