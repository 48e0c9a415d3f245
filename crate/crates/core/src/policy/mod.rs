//! Mixture-of-experts policy network: forward evaluation, exact
//! backpropagation into per-parameter gradient buffers, Adam updates, and
//! plain-text checkpoints.

mod checkpoint;
mod mlp;
mod men;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint};
pub use men::{
    ForwardTrace, GaitInput, MenConfig, MenPolicy, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
    POLICY_OUTPUT_DIM, RELATIVE_STATE_DIM,
};
pub use mlp::{Activation, Dense, Mlp, MlpGrads, MlpTrace};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("unknown gait input mode `{0}`")]
    UnknownGaitInput(String),
    #[error("{experts} experts cannot cover {modes} modes (need E >= M)")]
    TooFewExperts { experts: usize, modes: usize },
    #[error("stale forward trace: policy version {policy_version}, trace version {trace_version}")]
    StaleTrace { trace_version: u64, policy_version: u64 },
    #[error("checkpoint parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checkpoint io error for `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
