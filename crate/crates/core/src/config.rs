//! Plain-text run configuration: `section.key = value` lines with `#`
//! comments. Missing keys take the shipped defaults; unknown keys are fatal
//! so a typo cannot silently corrupt a benchmark. The resolved configuration
//! echoes back as a valid config file.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::bench::BenchConfig;
use crate::losses::{LossKind, LossVariant};
use crate::model::{GaitSpec, Mode, ModeSchedule};
use crate::policy::{Activation, GaitInput};
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io error for `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `section.key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("gait section: {0}")]
    Gait(String),
    #[error("loss section: {0}")]
    Loss(String),
}

/// Fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub loss: LossKind,
    pub gaits: Vec<GaitSpec>,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            loss: LossKind {
                variant: LossVariant::L3,
                guided: false,
                lambda: 1.0,
                beta: 1.0,
            },
            gaits: vec![GaitSpec::walk()],
            bench: BenchConfig::default(),
        }
    }
}

struct RawGait {
    names: Option<String>,
    events: Option<(usize, String)>,
    modes: Option<(usize, String)>,
    cycle: Option<(usize, f64)>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut raw_gait =
        RawGait { names: None, events: None, modes: None, cycle: None };
    let mut bench_seed_count: Option<usize> = None;

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: ln, text: line.to_string() })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |message: String| ConfigError::Value {
            line: ln,
            key: key.to_string(),
            message,
        };
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|e| bad(e.to_string()))?
            };
        }
        let parse_list = |n: usize| -> Result<Vec<f64>, ConfigError> {
            let vals: Result<Vec<f64>, _> =
                value.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| bad(e.to_string()))?;
            if vals.len() != n {
                return Err(bad(format!("expected {n} comma-separated values, got {}", vals.len())));
            }
            Ok(vals)
        };
        let parse_sizes = || -> Result<Vec<usize>, ConfigError> {
            if value == "none" {
                return Ok(Vec::new());
            }
            value
                .split(',')
                .map(|v| v.trim().parse::<usize>().map_err(|e| bad(e.to_string())))
                .collect()
        };
        match key {
            "train.dt" => cfg.train.dt = parse!(f64),
            "train.rollout" => cfg.train.rollout_len = parse!(f64),
            "train.threads" => cfg.train.threads = parse!(usize),
            "train.jobs" => cfg.train.jobs = parse!(usize),
            "train.samples" => cfg.train.samples_per_emission = parse!(usize),
            "train.data_decimation" => cfg.train.data_decimation = parse!(usize),
            "train.metrics_decimation" => cfg.train.metrics_decimation = parse!(usize),
            "train.batch" => cfg.train.batch = parse!(usize),
            "train.learning_rate" => cfg.train.learning_rate = parse!(f64),
            "train.iterations" => cfg.train.iterations = parse!(usize),
            "train.buffer" => cfg.train.buffer_capacity = parse!(usize),
            "train.sample_sigma" => cfg.train.sample_sigma = parse!(f64),
            "train.init_pos_sigma" => cfg.train.init_pos_sigma = parse!(f64),
            "train.init_vel_sigma" => cfg.train.init_vel_sigma = parse!(f64),
            "train.command_range" => cfg.train.command_range = parse!(f64),
            "train.gen_every" => cfg.train.gen_every = parse!(usize),
            "train.snapshot_every" => cfg.train.snapshot_every = parse!(usize),
            "train.startup_timeout" => cfg.train.startup_timeout = parse!(f64),
            "train.metrics_command" => cfg.train.metrics_command = parse!(f64),
            "train.seed" => cfg.train.seed = parse!(u64),
            "train.deterministic" => cfg.train.deterministic = parse!(bool),
            "solver.horizon" => cfg.train.horizon = parse!(f64),
            "solver.mu" => cfg.train.barrier_mu = parse!(f64),
            "solver.delta" => cfg.train.barrier_delta = parse!(f64),
            "cost.q_diag" => cfg.train.cost.q_diag = to_array6(parse_list(6)?),
            "cost.r_diag" => cfg.train.cost.r_diag = to_array6(parse_list(6)?),
            "cost.qf_diag" => cfg.train.cost.qf_diag = to_array6(parse_list(6)?),
            "cost.height" => cfg.train.cost.height = parse!(f64),
            "cost.foot_offsets" => {
                let v = parse_list(2)?;
                cfg.train.cost.foot_offsets = [v[0], v[1]];
            }
            "policy.experts" => cfg.train.policy.num_experts = parse!(usize),
            "policy.expert_hidden" => cfg.train.policy.expert_hidden = parse_sizes()?,
            "policy.gating_hidden" => cfg.train.policy.gating_hidden = parse_sizes()?,
            "policy.activation" => {
                cfg.train.policy.activation =
                    Activation::from_name(value).map_err(|e| bad(e.to_string()))?
            }
            "policy.gait_input" => {
                cfg.train.policy.gait_input =
                    GaitInput::from_name(value).map_err(|e| bad(e.to_string()))?
            }
            "policy.output_scale" => {
                cfg.train.policy.output_scale = to_array6(parse_list(6)?)
            }
            "policy.head_scale" => cfg.train.policy.expert_head_scale = parse!(f64),
            "loss.variant" => {
                cfg.loss.variant = LossVariant::from_name(value)
                    .ok_or_else(|| bad(format!("unknown loss variant `{value}`")))?
            }
            "loss.guided" => cfg.loss.guided = parse!(bool),
            "loss.beta" => cfg.loss.beta = parse!(f64),
            "loss.lambda" => cfg.loss.lambda = parse!(f64),
            "gait.name" => raw_gait.names = Some(value.to_string()),
            "gait.events" => raw_gait.events = Some((ln, value.to_string())),
            "gait.modes" => raw_gait.modes = Some((ln, value.to_string())),
            "gait.cycle" => raw_gait.cycle = Some((ln, parse!(f64))),
            "bench.seeds" => bench_seed_count = Some(parse!(usize)),
            "bench.eval_runs" => cfg.bench.eval_runs = parse!(usize),
            "bench.scales" => {
                let vals: Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                cfg.bench.scales = vals.map_err(|e| bad(e.to_string()))?;
            }
            "bench.duration" => cfg.bench.eval_duration = parse!(f64),
            "bench.resp_points" => cfg.bench.responsibility_points = parse!(usize),
            "bench.resp_threshold" => cfg.bench.responsibility_threshold = parse!(f64),
            "bench.parallelism" => cfg.bench.parallelism = parse!(usize),
            other => {
                return Err(ConfigError::UnknownKey { line: ln, key: other.to_string() })
            }
        }
    }

    if let Some(n) = bench_seed_count {
        cfg.bench.seeds = (0..n as u64).collect();
    }
    cfg.gaits = resolve_gaits(&raw_gait)?;
    cfg.loss.validate().map_err(|e| ConfigError::Loss(e.to_string()))?;
    Ok(cfg)
}

fn to_array6(v: Vec<f64>) -> [f64; 6] {
    let mut a = [0.0; 6];
    a.copy_from_slice(&v);
    a
}

fn resolve_gaits(raw: &RawGait) -> Result<Vec<GaitSpec>, ConfigError> {
    let custom_parts =
        [raw.events.is_some(), raw.modes.is_some(), raw.cycle.is_some()];
    if custom_parts.iter().any(|p| *p) {
        if !custom_parts.iter().all(|p| *p) {
            return Err(ConfigError::Gait(
                "a custom gait needs gait.events, gait.modes, and gait.cycle together".into(),
            ));
        }
        let (_, events_text) = raw.events.as_ref().unwrap();
        let (_, modes_text) = raw.modes.as_ref().unwrap();
        let (_, cycle) = raw.cycle.as_ref().unwrap();
        let events: Result<Vec<f64>, _> = if events_text.trim() == "none" {
            Ok(Vec::new())
        } else {
            events_text.split(',').map(|v| v.trim().parse::<f64>()).collect()
        };
        let events = events.map_err(|e| ConfigError::Gait(format!("gait.events: {e}")))?;
        let modes: Result<Vec<Mode>, _> =
            modes_text.split(',').map(|m| Mode::from_name(m.trim())).collect();
        let modes = modes.map_err(|e| ConfigError::Gait(e.to_string()))?;
        let schedule = ModeSchedule::new(events, modes, *cycle)
            .map_err(|e| ConfigError::Gait(e.to_string()))?;
        let name = raw.names.clone().unwrap_or_else(|| "custom".to_string());
        return Ok(vec![GaitSpec { name, schedule }]);
    }
    let names = raw.names.clone().unwrap_or_else(|| "walk".to_string());
    names
        .split(',')
        .map(|n| GaitSpec::by_name(n.trim()).map_err(|e| ConfigError::Gait(e.to_string())))
        .collect()
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn join_usize(values: &[usize]) -> String {
    if values.is_empty() {
        "none".into()
    } else {
        values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Emits the fully resolved configuration; parsing the result reproduces the
/// configuration exactly.
pub fn to_config_string(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let t = &cfg.train;
    let _ = writeln!(out, "train.dt = {}", t.dt);
    let _ = writeln!(out, "train.rollout = {}", t.rollout_len);
    let _ = writeln!(out, "train.threads = {}", t.threads);
    let _ = writeln!(out, "train.jobs = {}", t.jobs);
    let _ = writeln!(out, "train.samples = {}", t.samples_per_emission);
    let _ = writeln!(out, "train.data_decimation = {}", t.data_decimation);
    let _ = writeln!(out, "train.metrics_decimation = {}", t.metrics_decimation);
    let _ = writeln!(out, "train.batch = {}", t.batch);
    let _ = writeln!(out, "train.learning_rate = {}", t.learning_rate);
    let _ = writeln!(out, "train.iterations = {}", t.iterations);
    let _ = writeln!(out, "train.buffer = {}", t.buffer_capacity);
    let _ = writeln!(out, "train.sample_sigma = {}", t.sample_sigma);
    let _ = writeln!(out, "train.init_pos_sigma = {}", t.init_pos_sigma);
    let _ = writeln!(out, "train.init_vel_sigma = {}", t.init_vel_sigma);
    let _ = writeln!(out, "train.command_range = {}", t.command_range);
    let _ = writeln!(out, "train.gen_every = {}", t.gen_every);
    let _ = writeln!(out, "train.snapshot_every = {}", t.snapshot_every);
    let _ = writeln!(out, "train.startup_timeout = {}", t.startup_timeout);
    let _ = writeln!(out, "train.metrics_command = {}", t.metrics_command);
    let _ = writeln!(out, "train.seed = {}", t.seed);
    let _ = writeln!(out, "train.deterministic = {}", t.deterministic);
    let _ = writeln!(out, "solver.horizon = {}", t.horizon);
    let _ = writeln!(out, "solver.mu = {}", t.barrier_mu);
    let _ = writeln!(out, "solver.delta = {}", t.barrier_delta);
    let _ = writeln!(out, "cost.q_diag = {}", join_f64(&t.cost.q_diag));
    let _ = writeln!(out, "cost.r_diag = {}", join_f64(&t.cost.r_diag));
    let _ = writeln!(out, "cost.qf_diag = {}", join_f64(&t.cost.qf_diag));
    let _ = writeln!(out, "cost.height = {}", t.cost.height);
    let _ = writeln!(out, "cost.foot_offsets = {}", join_f64(&t.cost.foot_offsets));
    let _ = writeln!(out, "policy.experts = {}", t.policy.num_experts);
    let _ = writeln!(out, "policy.expert_hidden = {}", join_usize(&t.policy.expert_hidden));
    let _ = writeln!(out, "policy.gating_hidden = {}", join_usize(&t.policy.gating_hidden));
    let _ = writeln!(out, "policy.activation = {}", t.policy.activation.name());
    let _ = writeln!(out, "policy.gait_input = {}", t.policy.gait_input.name());
    let _ = writeln!(out, "policy.output_scale = {}", join_f64(&t.policy.output_scale));
    let _ = writeln!(out, "policy.head_scale = {}", t.policy.expert_head_scale);
    let _ = writeln!(out, "loss.variant = {}", cfg.loss.variant.name());
    let _ = writeln!(out, "loss.guided = {}", cfg.loss.guided);
    let _ = writeln!(out, "loss.beta = {}", cfg.loss.beta);
    let _ = writeln!(out, "loss.lambda = {}", cfg.loss.lambda);
    if cfg.gaits.len() == 1 && GaitSpec::by_name(&cfg.gaits[0].name).is_err() {
        // custom gait: emit its full schedule
        let g = &cfg.gaits[0];
        let _ = writeln!(out, "gait.name = {}", g.name);
        let events = g.schedule.event_times();
        let _ = writeln!(
            out,
            "gait.events = {}",
            if events.is_empty() { "none".into() } else { join_f64(events) }
        );
        let _ = writeln!(
            out,
            "gait.modes = {}",
            g.schedule.modes().iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(out, "gait.cycle = {}", g.schedule.cycle_duration());
    } else {
        let _ = writeln!(
            out,
            "gait.name = {}",
            cfg.gaits.iter().map(|g| g.name.as_str()).collect::<Vec<_>>().join(",")
        );
    }
    let b = &cfg.bench;
    let _ = writeln!(out, "bench.seeds = {}", b.seeds.len());
    let _ = writeln!(out, "bench.eval_runs = {}", b.eval_runs);
    let _ = writeln!(out, "bench.scales = {}", join_f64(&b.scales));
    let _ = writeln!(out, "bench.duration = {}", b.eval_duration);
    let _ = writeln!(out, "bench.resp_points = {}", b.responsibility_points);
    let _ = writeln!(out, "bench.resp_threshold = {}", b.responsibility_threshold);
    let _ = writeln!(out, "bench.parallelism = {}", b.parallelism);
    out
}
