//! The training loop: data-generation workers feed the replay buffer, the
//! learner samples batches, accumulates loss gradients, and applies Adam
//! steps, with periodic metrics rollouts. Workers and learner run
//! asynchronously; a fully serialized deterministic mode exists for
//! reproducible runs.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;

use crate::losses::{batch_loss, LossKind, ModeExpertMap};
use crate::model::{CostTemplate, GaitSpec, Mode};
use crate::policy::{MenConfig, MenPolicy};
use crate::solver::{BarrierParams, WalkerHamiltonian};
use crate::training::datagen::{alpha_schedule, generate_data, DataGenConfig, GenerationStats};
use crate::training::metrics::{metrics_rollout, Controller, MetricsRecord, RolloutSetup};
use crate::training::replay::ReplayBuffer;
use crate::training::TrainError;
use rand::SeedableRng;

/// Hyperparameters of one training run. The defaults follow the reference
/// values (dt 0.0025 s, T 4 s, n_t 5, n_j 10, n_s 1, d_d 4, d_m 200, B 32,
/// eta 1e-3) with desk-scale iteration counts.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub dt: f64,
    pub rollout_len: f64,
    pub threads: usize,
    pub jobs: usize,
    pub samples_per_emission: usize,
    pub data_decimation: usize,
    pub metrics_decimation: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub buffer_capacity: usize,
    pub sample_sigma: f64,
    pub init_pos_sigma: f64,
    pub init_vel_sigma: f64,
    pub command_range: f64,
    /// Deterministic-mode cadence: one data-generation run every this many
    /// learner iterations.
    pub gen_every: usize,
    /// Async mode: how often the learner publishes a policy snapshot.
    pub snapshot_every: usize,
    /// Async mode: seconds to wait for the buffer to fill at startup.
    pub startup_timeout: f64,
    /// Command velocity of the metrics rollouts.
    pub metrics_command: f64,
    pub horizon: f64,
    pub barrier_mu: f64,
    pub barrier_delta: f64,
    pub cost: CostTemplate,
    pub policy: MenConfig,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dt: 0.0025,
            rollout_len: 4.0,
            threads: 5,
            jobs: 10,
            samples_per_emission: 1,
            data_decimation: 4,
            metrics_decimation: 200,
            batch: 32,
            learning_rate: 1e-3,
            iterations: 20_000,
            buffer_capacity: 100_000,
            sample_sigma: 0.02,
            init_pos_sigma: 0.05,
            init_vel_sigma: 0.1,
            command_range: 0.5,
            gen_every: 1000,
            snapshot_every: 50,
            startup_timeout: 120.0,
            metrics_command: 0.3,
            horizon: 0.6,
            barrier_mu: 0.004,
            barrier_delta: 0.01,
            cost: CostTemplate::default(),
            policy: MenConfig::default(),
            seed: 0,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, gaits: &[GaitSpec]) -> Result<(), TrainError> {
        if gaits.is_empty() {
            return Err(TrainError::InvalidConfig("need at least one gait".into()));
        }
        for (name, v) in [
            ("train.dt", self.dt),
            ("train.rollout", self.rollout_len),
            ("train.learning_rate", self.learning_rate),
            ("train.sample_sigma", self.sample_sigma),
            ("solver.horizon", self.horizon),
            ("solver.mu", self.barrier_mu),
            ("solver.delta", self.barrier_delta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(TrainError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("train.threads", self.threads),
            ("train.jobs", self.jobs),
            ("train.data_decimation", self.data_decimation),
            ("train.metrics_decimation", self.metrics_decimation),
            ("train.batch", self.batch),
            ("train.buffer", self.buffer_capacity),
            ("train.gen_every", self.gen_every),
            ("train.snapshot_every", self.snapshot_every),
        ] {
            if v == 0 {
                return Err(TrainError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        let modes_required = required_modes(gaits);
        self.policy
            .validate(modes_required)
            .map_err(TrainError::Policy)?;
        Ok(())
    }

    pub fn datagen(&self) -> DataGenConfig {
        DataGenConfig {
            dt: self.dt,
            rollout_len: self.rollout_len,
            jobs: self.jobs,
            samples_per_emission: self.samples_per_emission,
            data_decimation: self.data_decimation,
            sample_sigma: self.sample_sigma,
            init_pos_sigma: self.init_pos_sigma,
            init_vel_sigma: self.init_vel_sigma,
            command_range: self.command_range,
            horizon: self.horizon,
            barrier_mu: self.barrier_mu,
            barrier_delta: self.barrier_delta,
            cost: self.cost.clone(),
        }
    }

    pub fn hamiltonian(&self) -> Result<WalkerHamiltonian, TrainError> {
        let cost = self.cost.cost_for(0.0)?;
        Ok(WalkerHamiltonian::new(
            &cost,
            BarrierParams::new(self.barrier_mu, self.barrier_delta),
        ))
    }
}

/// Number of distinct modes a gait set exercises.
pub fn required_modes(gaits: &[GaitSpec]) -> usize {
    let mut modes: Vec<Mode> = Vec::new();
    for g in gaits {
        for m in g.schedule.observed_modes() {
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
    }
    modes.len()
}

/// Result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub policy: MenPolicy,
    pub history: Vec<MetricsRecord>,
    pub stats: GenerationStats,
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 over seed xor tag
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_POLICY: u64 = 1;
const TAG_BUFFER: u64 = 2;
const TAG_GEN: u64 = 3;
const TAG_METRICS: u64 = 4;
const TAG_WORKER: u64 = 5;

/// Trains a policy on the given gait set with the given loss. Multi-gait
/// training samples gaits uniformly per job.
pub fn train(
    cfg: &TrainConfig,
    gaits: &[GaitSpec],
    loss: &LossKind,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate(gaits)?;
    loss.validate()?;
    let mut policy_cfg = cfg.policy.clone();
    policy_cfg.seed = derive_seed(cfg.seed, TAG_POLICY);
    let policy = MenPolicy::new(policy_cfg);
    if cfg.iterations == 0 {
        return Ok(TrainOutcome { policy, history: Vec::new(), stats: GenerationStats::default() });
    }
    if cfg.deterministic {
        train_deterministic(cfg, gaits, loss, policy)
    } else {
        train_async(cfg, gaits, loss, policy)
    }
}

fn metrics_setup(cfg: &TrainConfig) -> Result<RolloutSetup, TrainError> {
    Ok(RolloutSetup {
        dt: cfg.dt,
        duration: cfg.rollout_len,
        cost: cfg.cost.cost_for(cfg.metrics_command)?,
    })
}

fn run_metrics(
    cfg: &TrainConfig,
    gaits: &[GaitSpec],
    policy: &MenPolicy,
    setup: &RolloutSetup,
    iteration: usize,
    index: usize,
) -> Result<MetricsRecord, TrainError> {
    let gait = &gaits[index % gaits.len()];
    let mut record = metrics_rollout(
        &mut Controller::Policy(policy),
        gait,
        setup,
        0.0,
        derive_seed(cfg.seed, TAG_METRICS ^ ((index as u64) << 8)),
    )?;
    record.iteration = iteration;
    Ok(record)
}

fn train_deterministic(
    cfg: &TrainConfig,
    gaits: &[GaitSpec],
    loss: &LossKind,
    mut policy: MenPolicy,
) -> Result<TrainOutcome, TrainError> {
    let gen_cfg = cfg.datagen();
    let ham = cfg.hamiltonian()?;
    let map = ModeExpertMap::default();
    let setup = metrics_setup(cfg)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, derive_seed(cfg.seed, TAG_BUFFER));
    let mut stats = GenerationStats::default();
    let mut history = Vec::new();

    let mut gen_index = 0u64;
    let run_gen = |buffer: &mut ReplayBuffer,
                       policy: &MenPolicy,
                       alpha: f64,
                       gen_index: u64,
                       stats: &mut GenerationStats|
     -> Result<(), TrainError> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_GEN ^ (gen_index << 16)));
        let (tuples, st) = generate_data(&gen_cfg, gaits, policy, alpha, &mut rng)?;
        buffer.push_all(tuples);
        stats.merge(&st);
        Ok(())
    };

    run_gen(&mut buffer, &policy, 1.0, gen_index, &mut stats)?;
    if buffer.is_empty() {
        return Err(TrainError::BufferTimeout { needed: cfg.batch, timeout: 0.0 });
    }
    for it in 0..cfg.iterations {
        let alpha = alpha_schedule(it, cfg.iterations);
        if it > 0 && it % cfg.gen_every == 0 {
            gen_index += 1;
            run_gen(&mut buffer, &policy, alpha, gen_index, &mut stats)?;
        }
        let batch = buffer.sample(cfg.batch)?;
        batch_loss(loss, &batch, &mut policy, &ham, &map)?;
        policy.adam_step(cfg.learning_rate);
        if (it + 1) % cfg.metrics_decimation == 0 {
            let record = run_metrics(cfg, gaits, &policy, &setup, it + 1, history.len())?;
            history.push(record);
        }
    }
    Ok(TrainOutcome { policy, history, stats })
}

fn train_async(
    cfg: &TrainConfig,
    gaits: &[GaitSpec],
    loss: &LossKind,
    mut policy: MenPolicy,
) -> Result<TrainOutcome, TrainError> {
    let gen_cfg = cfg.datagen();
    let ham = cfg.hamiltonian()?;
    let map = ModeExpertMap::default();
    let setup = metrics_setup(cfg)?;
    let buffer = Mutex::new(ReplayBuffer::new(
        cfg.buffer_capacity,
        derive_seed(cfg.seed, TAG_BUFFER),
    ));
    let stats = Mutex::new(GenerationStats::default());
    let alpha_bits = AtomicU64::new(1.0f64.to_bits());
    let stop = AtomicBool::new(false);
    let snapshot = RwLock::new(Arc::new(policy.clone()));

    let result: Result<(Vec<MetricsRecord>, MenPolicy), TrainError> =
        std::thread::scope(|scope| {
            for worker in 0..cfg.threads {
                let buffer = &buffer;
                let stats = &stats;
                let alpha_bits = &alpha_bits;
                let stop = &stop;
                let snapshot = &snapshot;
                let gen_cfg = &gen_cfg;
                scope.spawn(move || {
                    let mut run = 0u64;
                    while !stop.load(Ordering::Relaxed) {
                        let snap = snapshot.read().expect("snapshot lock").clone();
                        let alpha = f64::from_bits(alpha_bits.load(Ordering::Relaxed));
                        let seed = derive_seed(
                            cfg.seed,
                            TAG_WORKER ^ ((worker as u64) << 40) ^ (run << 8),
                        );
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        if let Ok((tuples, st)) =
                            generate_data(gen_cfg, gaits, &snap, alpha, &mut rng)
                        {
                            buffer.lock().expect("buffer lock").push_all(tuples);
                            stats.lock().expect("stats lock").merge(&st);
                        }
                        run += 1;
                    }
                });
            }

            // learner
            let started = Instant::now();
            loop {
                let len = buffer.lock().expect("buffer lock").len();
                if len >= cfg.batch {
                    break;
                }
                if started.elapsed().as_secs_f64() > cfg.startup_timeout {
                    stop.store(true, Ordering::Relaxed);
                    return Err(TrainError::BufferTimeout {
                        needed: cfg.batch,
                        timeout: cfg.startup_timeout,
                    });
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            let mut history = Vec::new();
            for it in 0..cfg.iterations {
                let alpha = alpha_schedule(it, cfg.iterations);
                alpha_bits.store(alpha.to_bits(), Ordering::Relaxed);
                if it % cfg.snapshot_every == 0 {
                    *snapshot.write().expect("snapshot lock") = Arc::new(policy.clone());
                }
                let batch = {
                    let mut guard = buffer.lock().expect("buffer lock");
                    guard.sample(cfg.batch)?
                };
                batch_loss(loss, &batch, &mut policy, &ham, &map)?;
                policy.adam_step(cfg.learning_rate);
                if (it + 1) % cfg.metrics_decimation == 0 {
                    let record =
                        run_metrics(cfg, gaits, &policy, &setup, it + 1, history.len())?;
                    history.push(record);
                }
            }
            stop.store(true, Ordering::Relaxed);
            Ok((history, policy))
        });
    let (history, policy) = result?;
    let stats = stats.into_inner().expect("stats lock");
    Ok(TrainOutcome { policy, history, stats })
}
