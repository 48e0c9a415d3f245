//! Command-line entry point: training, evaluation, benchmarks, single
//! solves, and checkpoint inspection. Exit codes: 0 success, 1 usage error,
//! 2 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_ablation, run_bc_benchmark, run_multigait, CheckResult};
use crate::config::{load_config, to_config_string, RunConfig};
use crate::losses::LossVariant;
use crate::model::GaitSpec;
use crate::policy::{load_checkpoint, save_checkpoint};
use crate::solver::{solve, OcpDefinition};
use crate::training::{metrics_rollout, train, Controller, MetricsRecord, RolloutSetup};

#[derive(Parser)]
#[command(
    name = "mpcnet",
    about = "MPC-guided imitation learning for a planar hybrid walker",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (section.key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override train.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Force the fully serialized deterministic mode.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Gait name(s), comma separated (walk, trot-analog, stand).
    #[arg(long)]
    gait: Option<String>,
    /// Loss variant: l1, l2, l3, bc.
    #[arg(long)]
    loss: Option<String>,
    /// Inverse temperature.
    #[arg(long)]
    beta: Option<f64>,
    /// Guided-loss weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Guided loss.
    #[arg(long)]
    guided: bool,
    /// Learner iterations.
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Policy checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Gait name.
    #[arg(long)]
    gait: Option<String>,
    /// Velocity impulse magnitude (m/s).
    #[arg(long, default_value_t = 0.0)]
    disturbance: f64,
    /// Rollout duration in seconds (defaults to bench.duration).
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Gait name.
    #[arg(long)]
    gait: Option<String>,
    /// Solve start time within the gait cycle.
    #[arg(long, default_value_t = 0.0)]
    time: f64,
    /// Initial base-height offset from the reference (meters).
    #[arg(long, default_value_t = 0.0)]
    offset_z: f64,
    /// Write the nominal trajectory to <out>/trajectory.csv.
    #[arg(long)]
    dump: bool,
}

#[derive(Args)]
struct InspectArgs {
    /// Policy checkpoint to summarize.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write policy.ckpt plus metrics.csv.
    Train(TrainArgs),
    /// Roll out a trained policy and report its metrics.
    Eval(EvalArgs),
    /// Loss ablation: L2 vs L3 plus the gait-parametrization ablation.
    BenchAblation(BenchArgs),
    /// Robustness benchmark: MPC teacher vs MPC-Net vs behavioral cloning.
    BenchBc(BenchArgs),
    /// Multi-gait vs single-gait comparison with guided losses.
    BenchMultigait(BenchArgs),
    /// One MPC solve, optionally dumping the nominal trajectory as CSV.
    Solve(SolveArgs),
    /// Print a checkpoint summary.
    Inspect(InspectArgs),
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(RunFailure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(RunFailure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

enum RunFailure {
    Usage(String),
    Runtime(String),
}

impl RunFailure {
    fn runtime<E: std::fmt::Display>(e: E) -> Self {
        RunFailure::Runtime(e.to_string())
    }
}

fn load_or_default(common: &CommonArgs, required: bool) -> Result<RunConfig, RunFailure> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).map_err(|e| match e {
            crate::config::ConfigError::Io { .. } => RunFailure::Usage(e.to_string()),
            other => RunFailure::Usage(other.to_string()),
        })?,
        None if required => {
            return Err(RunFailure::Usage(
                "missing --config <path> (required for this command)".into(),
            ))
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if common.deterministic {
        cfg.train.deterministic = true;
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<(), RunFailure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| RunFailure::Runtime(format!("cannot create `{}`: {e}", dir.display())))
}

fn parse_gaits(names: &str) -> Result<Vec<GaitSpec>, RunFailure> {
    names
        .split(',')
        .map(|n| GaitSpec::by_name(n.trim()).map_err(|e| RunFailure::Usage(e.to_string())))
        .collect()
}

fn metrics_csv(history: &[MetricsRecord]) -> String {
    let mut text = String::from("iteration,constraint_violation,cost,survival_time,completed\n");
    for r in history {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.avg_constraint_violation, r.incurred_cost, r.survival_time, r.completed
        ));
    }
    text
}

fn print_checks(label: &str, checks: &[CheckResult]) {
    for c in checks {
        println!("[{label}] {}: {} ({})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
}

fn dispatch(cli: Cli) -> Result<(), RunFailure> {
    match cli.command {
        Command::Train(args) => {
            let mut cfg = load_or_default(&args.common, true)?;
            if let Some(gait) = &args.gait {
                cfg.gaits = parse_gaits(gait)?;
            }
            if let Some(loss) = &args.loss {
                cfg.loss.variant = LossVariant::from_name(loss)
                    .ok_or_else(|| RunFailure::Usage(format!("unknown loss `{loss}`")))?;
            }
            if let Some(beta) = args.beta {
                cfg.loss.beta = beta;
            }
            if let Some(lambda) = args.lambda {
                cfg.loss.lambda = lambda;
            }
            if args.guided {
                cfg.loss.guided = true;
            }
            if let Some(iterations) = args.iterations {
                cfg.train.iterations = iterations;
            }
            cfg.loss.validate().map_err(|e| RunFailure::Usage(e.to_string()))?;
            ensure_out(&args.common.out)?;
            print!("{}", to_config_string(&cfg));
            let outcome =
                train(&cfg.train, &cfg.gaits, &cfg.loss).map_err(RunFailure::runtime)?;
            let ckpt = args.common.out.join("policy.ckpt");
            save_checkpoint(&outcome.policy, &ckpt).map_err(RunFailure::runtime)?;
            std::fs::write(args.common.out.join("metrics.csv"), metrics_csv(&outcome.history))
                .map_err(RunFailure::runtime)?;
            let last = outcome.history.last();
            println!(
                "trained {} iterations ({} jobs, {} tuples); final survival {}",
                cfg.train.iterations,
                outcome.stats.completed_jobs,
                outcome.stats.tuples,
                last.map(|r| format!("{:.2} s", r.survival_time)).unwrap_or_else(|| "-".into()),
            );
            println!("wrote {} and metrics.csv", ckpt.display());
            Ok(())
        }
        Command::Eval(args) => {
            let cfg = load_or_default(&args.common, false)?;
            let policy = load_checkpoint(&args.checkpoint).map_err(RunFailure::runtime)?;
            let gaits = match &args.gait {
                Some(names) => parse_gaits(names)?,
                None => cfg.gaits.clone(),
            };
            let duration = args.duration.unwrap_or(cfg.bench.eval_duration);
            let setup = RolloutSetup {
                dt: cfg.train.dt,
                duration,
                cost: cfg
                    .train
                    .cost
                    .cost_for(cfg.train.metrics_command)
                    .map_err(RunFailure::runtime)?,
            };
            let record = metrics_rollout(
                &mut Controller::Policy(&policy),
                &gaits[0],
                &setup,
                args.disturbance,
                cfg.train.seed,
            )
            .map_err(RunFailure::runtime)?;
            println!("gait: {}", gaits[0].name);
            println!("survival_time: {} s", record.survival_time);
            println!("constraint_violation: {}", record.avg_constraint_violation);
            println!("incurred_cost: {}", record.incurred_cost);
            println!("completed: {}", record.completed);
            ensure_out(&args.common.out)?;
            std::fs::write(
                args.common.out.join("eval.csv"),
                metrics_csv(std::slice::from_ref(&record)),
            )
            .map_err(RunFailure::runtime)?;
            Ok(())
        }
        Command::BenchAblation(args) => {
            let cfg = load_or_default(&args.common, true)?;
            ensure_out(&args.common.out)?;
            print!("{}", to_config_string(&cfg));
            let outcome = run_ablation(&cfg.train, &cfg.bench, &args.common.out)
                .map_err(RunFailure::runtime)?;
            print_checks("ablation", &outcome.checks);
            println!("wrote ablation.csv and ablation_summary.txt");
            Ok(())
        }
        Command::BenchBc(args) => {
            let cfg = load_or_default(&args.common, true)?;
            ensure_out(&args.common.out)?;
            print!("{}", to_config_string(&cfg));
            let outcome =
                run_bc_benchmark(&cfg.train, &cfg.bench, &cfg.gaits[0], &args.common.out)
                    .map_err(RunFailure::runtime)?;
            print_checks("bc", &outcome.checks);
            println!("wrote bc.csv, bc_runs.csv, and bc_summary.txt");
            Ok(())
        }
        Command::BenchMultigait(args) => {
            let cfg = load_or_default(&args.common, true)?;
            ensure_out(&args.common.out)?;
            print!("{}", to_config_string(&cfg));
            let outcome = run_multigait(&cfg.train, &cfg.bench, &args.common.out)
                .map_err(RunFailure::runtime)?;
            print_checks("multigait", &outcome.checks);
            println!("wrote multigait.csv, multigait_trace.csv, and multigait_summary.txt");
            Ok(())
        }
        Command::Solve(args) => {
            let cfg = load_or_default(&args.common, false)?;
            let gaits = match &args.gait {
                Some(names) => parse_gaits(names)?,
                None => cfg.gaits.clone(),
            };
            let cost = cfg
                .train
                .cost
                .cost_for(cfg.train.metrics_command)
                .map_err(RunFailure::runtime)?;
            let mut x = cost.desired.at(args.time);
            x.base_pos.y += args.offset_z;
            let ocp = OcpDefinition {
                horizon: cfg.train.horizon,
                cost,
                schedule: gaits[0].schedule.clone(),
                barrier_mu: cfg.train.barrier_mu,
                barrier_delta: cfg.train.barrier_delta,
                dt: cfg.train.dt,
            };
            let sol = solve(&ocp, &x, args.time).map_err(RunFailure::runtime)?;
            println!(
                "solved {} knots in {} iterations (converged: {}); objective {}",
                sol.knots(),
                sol.iterations,
                sol.converged,
                sol.total_cost
            );
            if args.dump {
                ensure_out(&args.common.out)?;
                let mut text = String::from(
                    "time,x0,x1,x2,x3,x4,x5,u0,u1,u2,u3,u4,u5,cost\n",
                );
                for k in 0..sol.u_nom.len() {
                    let xs: Vec<String> =
                        sol.x_nom[k].iter().map(|v| v.to_string()).collect();
                    let us: Vec<String> =
                        sol.u_nom[k].iter().map(|v| v.to_string()).collect();
                    let stage = ocp.cost.stage(
                        &nalgebra::Vector6::from_row_slice(sol.x_nom[k].as_slice()),
                        &nalgebra::Vector6::from_row_slice(sol.u_nom[k].as_slice()),
                        sol.times[k],
                    );
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        sol.times[k],
                        xs.join(","),
                        us.join(","),
                        stage
                    ));
                }
                let path = args.common.out.join("trajectory.csv");
                std::fs::write(&path, text).map_err(RunFailure::runtime)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Inspect(args) => {
            let policy = load_checkpoint(&args.checkpoint).map_err(RunFailure::runtime)?;
            let cfg = &policy.config;
            println!("experts: {}", cfg.num_experts);
            println!("expert_hidden: {:?}", cfg.expert_hidden);
            println!("gating_hidden: {:?}", cfg.gating_hidden);
            println!("activation: {}", cfg.activation.name());
            println!("gait_input: {}", cfg.gait_input.name());
            println!("seed: {}", cfg.seed);
            println!("parameters: {}", policy.param_count());
            for (name, w, b) in policy.tensors() {
                println!("  {name}: {}x{} + {}", w.nrows(), w.ncols(), b.len());
            }
            Ok(())
        }
    }
}
