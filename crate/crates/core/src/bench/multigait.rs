//! Multi-gait study: guided L1/L2/L3 and unguided L3 trained over both gaits
//! with doubled iterations, compared against single-gait baselines, plus an
//! expert-selection trace across a gait transition.

use std::path::Path;

use crate::bench::report::{fmt, run_parallel, write_csv, write_summary, CheckResult};
use crate::bench::responsibility::{responsibility_stats, ResponsibilityReport};
use crate::bench::{BenchConfig, BenchError};
use crate::losses::{LossKind, LossVariant};
use crate::model::{generalized_time, relative_state, step, GaitSpec, Mode, WalkerInput};
use crate::policy::MenPolicy;
use crate::training::{metrics_rollout, train, Controller, RolloutSetup, TrainConfig, TrainError};

#[derive(Clone, Debug)]
pub struct MultigaitRow {
    pub variant: String,
    pub seed: u64,
    pub gait: String,
    pub single_resp: bool,
    pub violation: f64,
    pub survival: f64,
}

#[derive(Debug)]
pub struct MultigaitOutcome {
    pub rows: Vec<MultigaitRow>,
    pub baseline_rows: Vec<MultigaitRow>,
    /// Variant -> fraction of seeds achieving joint single responsibility.
    pub responsibility_rates: Vec<(String, f64)>,
    pub checks: Vec<CheckResult>,
    pub multi_iterations: usize,
}

/// Joint single responsibility across both gaits: per-mode dominants must
/// agree between gaits, stay injective over the union of modes, and clear
/// the threshold everywhere.
fn combine_reports(reports: &[ResponsibilityReport], threshold: f64) -> bool {
    let mut by_mode: Vec<(Mode, usize, f64)> = Vec::new();
    for report in reports {
        for (mode, expert, weight) in &report.assignment {
            if let Some(entry) = by_mode.iter_mut().find(|(m, _, _)| m == mode) {
                if entry.1 != *expert {
                    return false;
                }
                entry.2 = entry.2.min(*weight);
            } else {
                by_mode.push((*mode, *expert, *weight));
            }
        }
    }
    let mut seen = Vec::new();
    for (_, expert, weight) in &by_mode {
        if *weight < threshold || seen.contains(expert) {
            return false;
        }
        seen.push(*expert);
    }
    true
}

/// Runs the multi-gait comparison and writes `multigait.csv`,
/// `multigait_trace.csv`, and `multigait_summary.txt`.
pub fn run_multigait(
    base: &TrainConfig,
    bench: &BenchConfig,
    out_dir: &Path,
) -> Result<MultigaitOutcome, BenchError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| BenchError::Io { path: out_dir.to_path_buf(), source: e })?;
    let gaits = [GaitSpec::walk(), GaitSpec::trot_analog()];
    let multi_iterations = base.iterations * 2;

    let variants: Vec<(String, LossKind)> = vec![
        (
            "guided_l1".into(),
            LossKind { variant: LossVariant::L1, guided: true, lambda: 1.0, beta: 1.0 },
        ),
        (
            "guided_l2".into(),
            LossKind { variant: LossVariant::L2, guided: true, lambda: 1.0, beta: 1.0 },
        ),
        (
            "guided_l3".into(),
            LossKind { variant: LossVariant::L3, guided: true, lambda: 1.0, beta: 1.0 },
        ),
        (
            "l3".into(),
            LossKind { variant: LossVariant::L3, guided: false, lambda: 0.0, beta: 1.0 },
        ),
    ];

    struct Job {
        variant: String,
        loss: LossKind,
        seed: u64,
    }
    let jobs: Vec<Job> = variants
        .iter()
        .flat_map(|(name, loss)| {
            bench.seeds.iter().map(move |&seed| Job {
                variant: name.clone(),
                loss: *loss,
                seed,
            })
        })
        .collect();

    let multi_results: Vec<Result<(MenPolicy, bool, Vec<(String, f64, f64)>), BenchError>> =
        run_parallel(jobs.len(), bench.parallelism, |i| {
            let job = &jobs[i];
            let mut cfg = base.clone();
            cfg.seed = job.seed;
            cfg.deterministic = true;
            cfg.iterations = multi_iterations;
            let outcome = train(&cfg, &gaits, &job.loss)?;
            let setup = RolloutSetup {
                dt: cfg.dt,
                duration: cfg.rollout_len,
                cost: cfg
                    .cost
                    .cost_for(cfg.metrics_command)
                    .map_err(TrainError::from)?,
            };
            let mut reports = Vec::new();
            let mut evals = Vec::new();
            for gait in &gaits {
                let record = metrics_rollout(
                    &mut Controller::Policy(&outcome.policy),
                    gait,
                    &setup,
                    0.0,
                    job.seed ^ 0x316A,
                )?;
                reports.push(responsibility_stats(
                    &outcome.policy,
                    gait,
                    &cfg,
                    bench.responsibility_points,
                    bench.responsibility_threshold,
                )?);
                evals.push((
                    gait.name.clone(),
                    record.avg_constraint_violation,
                    record.survival_time,
                ));
            }
            let joint = combine_reports(&reports, bench.responsibility_threshold);
            Ok((outcome.policy, joint, evals))
        });

    let mut rows = Vec::new();
    let mut first_guided_l3: Option<MenPolicy> = None;
    for (job, result) in jobs.iter().zip(multi_results) {
        let (policy, joint, evals) = result?;
        if job.variant == "guided_l3" && first_guided_l3.is_none() {
            first_guided_l3 = Some(policy);
        }
        for (gait, violation, survival) in evals {
            rows.push(MultigaitRow {
                variant: job.variant.clone(),
                seed: job.seed,
                gait,
                single_resp: joint,
                violation,
                survival,
            });
        }
    }

    // single-gait baselines: unguided L3 per gait
    struct BaseJob {
        gait: usize,
        seed: u64,
    }
    let base_jobs: Vec<BaseJob> = (0..gaits.len())
        .flat_map(|g| bench.seeds.iter().map(move |&seed| BaseJob { gait: g, seed }))
        .collect();
    let l3 = LossKind { variant: LossVariant::L3, guided: false, lambda: 0.0, beta: 1.0 };
    let baseline_results: Vec<Result<MultigaitRow, BenchError>> =
        run_parallel(base_jobs.len(), bench.parallelism, |i| {
            let job = &base_jobs[i];
            let gait = &gaits[job.gait];
            let (single_resp, violation, survival) = super::ablation::run_single(
                base,
                bench,
                gait,
                &l3,
                base.policy.gait_input,
                job.seed,
                base.iterations,
            )?;
            Ok(MultigaitRow {
                variant: "single_l3".into(),
                seed: job.seed,
                gait: gait.name.clone(),
                single_resp,
                violation,
                survival,
            })
        });
    let mut baseline_rows = Vec::new();
    for r in baseline_results {
        baseline_rows.push(r?);
    }

    // aggregates and checks
    let mut responsibility_rates = Vec::new();
    for (name, _) in &variants {
        let seeds_ok = bench
            .seeds
            .iter()
            .filter(|&&seed| {
                rows.iter().any(|r| r.variant == *name && r.seed == seed && r.single_resp)
            })
            .count();
        responsibility_rates
            .push((name.clone(), seeds_ok as f64 / bench.seeds.len() as f64));
    }
    let mut checks = Vec::new();
    for (name, rate) in &responsibility_rates {
        if name.starts_with("guided") {
            checks.push(CheckResult::new(
                &format!("{name} achieves single responsibility on >= 70% of seeds"),
                *rate >= 0.7,
                format!("{:.0}%", rate * 100.0),
            ));
        }
    }
    for gait in ["walk", "trot-analog"] {
        let multi_mean = mean(rows
            .iter()
            .filter(|r| r.variant == "guided_l3" && r.gait == gait)
            .map(|r| r.violation));
        let single_mean = mean(baseline_rows.iter().filter(|r| r.gait == gait).map(|r| r.violation));
        checks.push(CheckResult::new(
            &format!("guided_l3 multi-gait violation within 2x of single-gait on {gait}"),
            multi_mean <= 2.0 * single_mean,
            format!("multi {multi_mean:.4} vs single {single_mean:.4}"),
        ));
    }

    let mut csv: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.variant,
                r.seed,
                r.gait,
                r.single_resp,
                fmt(r.violation),
                fmt(r.survival)
            )
        })
        .collect();
    csv.extend(baseline_rows.iter().map(|r| {
        format!(
            "{},{},{},{},{},{}",
            r.variant,
            r.seed,
            r.gait,
            r.single_resp,
            fmt(r.violation),
            fmt(r.survival)
        )
    }));
    write_csv(
        &out_dir.join("multigait.csv"),
        "variant,seed,gait,single_resp,violation,survival",
        &csv,
    )?;

    // expert-selection trace across a walk -> trot transition
    if let Some(policy) = &first_guided_l3 {
        let trace = transition_trace(base, &gaits, policy)?;
        write_csv(
            &out_dir.join("multigait_trace.csv"),
            &format!(
                "time,active_mode,argmax_expert,{}",
                (0..policy.num_experts()).map(|i| format!("p{i}")).collect::<Vec<_>>().join(",")
            ),
            &trace,
        )?;
    }
    write_summary(&out_dir.join("multigait_summary.txt"), &checks)?;

    Ok(MultigaitOutcome { rows, baseline_rows, responsibility_rates, checks, multi_iterations })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Pure-policy rollout that switches gait halfway; rows record the active
/// mode and the gating distribution over time.
fn transition_trace(
    base: &TrainConfig,
    gaits: &[GaitSpec; 2],
    policy: &MenPolicy,
) -> Result<Vec<String>, BenchError> {
    let segment = 2.0_f64;
    let cost = base
        .cost
        .cost_for(base.metrics_command)
        .map_err(TrainError::from)?;
    let desired = cost.desired.clone();
    let mut x = desired.at(0.0);
    let steps = (2.0 * segment / base.dt).round() as usize;
    let stride = (0.02 / base.dt).round().max(1.0) as usize;
    let mut rows = Vec::new();
    for j in 0..steps {
        let t = j as f64 * base.dt;
        let (gait, local_t) =
            if t < segment { (&gaits[0], t) } else { (&gaits[1], t - segment) };
        let gt = generalized_time(local_t, &gait.schedule);
        let xr = relative_state(&x, &desired.at(t));
        let trace = policy.forward(&gt, &xr);
        let mode = gait.schedule.mode_at(local_t);
        if j % stride == 0 {
            let argmax = trace
                .p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let ps = trace.p.iter().map(|p| fmt(*p)).collect::<Vec<_>>().join(",");
            rows.push(format!("{},{},{argmax},{ps}", fmt(t), mode.name()));
        }
        let u = WalkerInput::from_slice(trace.blended.as_slice()).map_err(TrainError::from)?;
        x = step(&x, &u, mode, base.dt).map_err(TrainError::from)?;
        // keep tracing even if the policy fails the height bound; the trace
        // is diagnostic, not a metric
    }
    Ok(rows)
}
