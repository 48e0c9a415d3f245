//! Mixture-of-experts policy: an MLP gating network with softmax output
//! selects among E independent MLP experts; the policy output is the
//! probability-weighted blend of the expert outputs.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{GeneralizedTime, RelativeState, GENERALIZED_TIME_DIM};
use crate::policy::mlp::{Activation, Mlp, MlpGrads, MlpTrace};
use crate::policy::PolicyError;

/// Which part of the generalized time feeds the policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaitInput {
    /// Full [phi, phi_dot, sin(pi phi)] encoding (6 entries).
    Full,
    /// Only the sinusoidal bumps (2 entries).
    BumpsOnly,
}

impl GaitInput {
    pub fn dim(&self) -> usize {
        match self {
            GaitInput::Full => GENERALIZED_TIME_DIM,
            GaitInput::BumpsOnly => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GaitInput::Full => "full",
            GaitInput::BumpsOnly => "bumps",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, PolicyError> {
        match name {
            "full" => Ok(GaitInput::Full),
            "bumps" => Ok(GaitInput::BumpsOnly),
            other => Err(PolicyError::UnknownGaitInput(other.to_string())),
        }
    }
}

pub const RELATIVE_STATE_DIM: usize = 6;
pub const POLICY_OUTPUT_DIM: usize = 6;

/// Architecture and initialization parameters of the mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MenConfig {
    pub num_experts: usize,
    pub expert_hidden: Vec<usize>,
    pub gating_hidden: Vec<usize>,
    pub activation: Activation,
    pub gait_input: GaitInput,
    /// Fixed per-component output scaling: network outputs are O(1), the
    /// walker's forces are O(100 N).
    pub output_scale: [f64; POLICY_OUTPUT_DIM],
    /// Initialization scale of the expert output layers. Small nonzero
    /// values let the per-expert Hamiltonians differ from the first
    /// iteration, which the posterior needs to route experts onto modes.
    pub expert_head_scale: f64,
    pub seed: u64,
}

impl Default for MenConfig {
    fn default() -> Self {
        Self {
            num_experts: 4,
            expert_hidden: vec![32, 32],
            gating_hidden: vec![32],
            activation: Activation::Tanh,
            gait_input: GaitInput::Full,
            output_scale: [100.0, 100.0, 100.0, 100.0, 1.0, 1.0],
            expert_head_scale: 0.05,
            seed: 0,
        }
    }
}

impl MenConfig {
    /// Input dimension of the mixture: the gating network consumes the
    /// generalized time plus the relative state.
    pub fn input_dim(&self) -> usize {
        self.gait_input.dim() + RELATIVE_STATE_DIM
    }

    /// Experts consume the relative state alone: an expert is one feedback
    /// law, and the gating decides which law the current gait phase needs.
    pub fn expert_input_dim(&self) -> usize {
        RELATIVE_STATE_DIM
    }

    pub fn validate(&self, modes_required: usize) -> Result<(), PolicyError> {
        if self.num_experts < modes_required {
            return Err(PolicyError::TooFewExperts {
                experts: self.num_experts,
                modes: modes_required,
            });
        }
        Ok(())
    }
}

/// Forward evaluation cache: inputs, gating probabilities, per-expert
/// outputs, the blended output, and the layer activations needed for
/// backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: DVector<f64>,
    pub p: DVector<f64>,
    pub expert_outputs: Vec<DVector<f64>>,
    pub blended: DVector<f64>,
    pub(crate) gating_trace: MlpTrace,
    pub(crate) expert_traces: Vec<MlpTrace>,
    pub(crate) version: u64,
}

#[derive(Clone, Debug)]
struct AdamState {
    m: Vec<MlpGrads>,
    v: Vec<MlpGrads>,
    step: u64,
}

/// The mixture-of-experts policy with gradient buffers and Adam state.
/// Only the learner thread mutates a policy; data-generation workers receive
/// cloned snapshots.
#[derive(Clone, Debug)]
pub struct MenPolicy {
    pub config: MenConfig,
    pub(crate) gating: Mlp,
    pub(crate) experts: Vec<Mlp>,
    pub(crate) gating_grads: MlpGrads,
    pub(crate) expert_grads: Vec<MlpGrads>,
    adam: AdamState,
    version: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

impl MenPolicy {
    pub fn new(config: MenConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let input = config.input_dim();
        let mut gating_sizes = vec![input];
        gating_sizes.extend_from_slice(&config.gating_hidden);
        gating_sizes.push(config.num_experts);
        // small head keeps the initial gating near uniform
        let gating = Mlp::init(&gating_sizes, config.activation, 0.01, &mut rng);
        let mut expert_sizes = vec![config.expert_input_dim()];
        expert_sizes.extend_from_slice(&config.expert_hidden);
        expert_sizes.push(POLICY_OUTPUT_DIM);
        let experts: Vec<Mlp> = (0..config.num_experts)
            .map(|_| Mlp::init(&expert_sizes, config.activation, config.expert_head_scale, &mut rng))
            .collect();
        let gating_grads = gating.zero_grads();
        let expert_grads: Vec<MlpGrads> = experts.iter().map(|e| e.zero_grads()).collect();
        let adam = AdamState {
            m: std::iter::once(&gating)
                .chain(experts.iter())
                .map(|n| n.zero_grads())
                .collect(),
            v: std::iter::once(&gating)
                .chain(experts.iter())
                .map(|n| n.zero_grads())
                .collect(),
            step: 0,
        };
        Self { config, gating, experts, gating_grads, expert_grads, adam, version: 0 }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_experts(&self) -> usize {
        self.config.num_experts
    }

    pub fn param_count(&self) -> usize {
        self.gating.param_count() + self.experts.iter().map(|e| e.param_count()).sum::<usize>()
    }

    /// Assembles the network input from the generalized time and relative
    /// state.
    pub fn assemble_input(&self, gt: &GeneralizedTime, xr: &RelativeState) -> DVector<f64> {
        let mut input = DVector::zeros(self.config.input_dim());
        match self.config.gait_input {
            GaitInput::Full => {
                for (i, v) in gt.to_vector().iter().enumerate() {
                    input[i] = *v;
                }
            }
            GaitInput::BumpsOnly => {
                input[0] = gt.bumps[0];
                input[1] = gt.bumps[1];
            }
        }
        let off = self.config.gait_input.dim();
        for i in 0..RELATIVE_STATE_DIM {
            input[off + i] = xr.values[i];
        }
        input
    }

    /// Forward evaluation; see `ForwardTrace`.
    pub fn forward(&self, gt: &GeneralizedTime, xr: &RelativeState) -> ForwardTrace {
        self.forward_input(self.assemble_input(gt, xr))
    }

    pub fn forward_input(&self, input: DVector<f64>) -> ForwardTrace {
        assert_eq!(input.len(), self.config.input_dim(), "input dimension mismatch");
        let (logits, gating_trace) = self.gating.forward(&input);
        let p = softmax(&logits);
        // the trailing entries of the input are the relative state
        let expert_input = DVector::from_fn(self.config.expert_input_dim(), |i, _| {
            input[self.config.gait_input.dim() + i]
        });
        let mut expert_outputs = Vec::with_capacity(self.experts.len());
        let mut expert_traces = Vec::with_capacity(self.experts.len());
        let mut blended = DVector::zeros(POLICY_OUTPUT_DIM);
        for (i, expert) in self.experts.iter().enumerate() {
            let (raw, trace) = expert.forward(&expert_input);
            let mut scaled = raw;
            for (s, sc) in scaled.iter_mut().zip(self.config.output_scale.iter()) {
                *s *= sc;
            }
            blended.axpy(p[i], &scaled, 1.0);
            expert_outputs.push(scaled);
            expert_traces.push(trace);
        }
        ForwardTrace {
            input,
            p,
            expert_outputs,
            blended,
            gating_trace,
            expert_traces,
            version: self.version,
        }
    }

    /// Accumulates sum_i a_i . dpi_i/dtheta + b_i . dp_i/dtheta into the
    /// gradient buffers (vector-Jacobian products; Jacobians are never
    /// materialized). `a` are per-expert output adjoints, `b` per-expert
    /// gating adjoints.
    pub fn accumulate_output_gradients(
        &mut self,
        trace: &ForwardTrace,
        a: &[DVector<f64>],
        b: &[f64],
    ) -> Result<(), PolicyError> {
        if trace.version != self.version {
            return Err(PolicyError::StaleTrace {
                trace_version: trace.version,
                policy_version: self.version,
            });
        }
        assert_eq!(a.len(), self.experts.len());
        assert_eq!(b.len(), self.experts.len());
        // experts: chain through the fixed output scaling
        for (i, expert) in self.experts.iter().enumerate() {
            if a[i].iter().all(|v| *v == 0.0) {
                continue;
            }
            let mut upstream = a[i].clone();
            for (u, sc) in upstream.iter_mut().zip(self.config.output_scale.iter()) {
                *u *= sc;
            }
            expert.backprop(&trace.expert_traces[i], &upstream, &mut self.expert_grads[i]);
        }
        // gating: softmax vector-Jacobian product
        let p = &trace.p;
        let dot: f64 = b.iter().zip(p.iter()).map(|(bi, pi)| bi * pi).sum();
        let logit_grad = DVector::from_fn(p.len(), |i, _| p[i] * (b[i] - dot));
        if logit_grad.iter().any(|v| *v != 0.0) {
            self.gating.backprop(&trace.gating_trace, &logit_grad, &mut self.gating_grads);
        }
        Ok(())
    }

    /// Standard Adam update from the accumulated gradients; buffers are
    /// zeroed and the parameter version advances.
    pub fn adam_step(&mut self, learning_rate: f64) {
        self.adam.step += 1;
        let t = self.adam.step;
        let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
        let nets: Vec<&mut Mlp> = std::iter::once(&mut self.gating)
            .chain(self.experts.iter_mut())
            .collect();
        let grads = std::iter::once(&mut self.gating_grads).chain(self.expert_grads.iter_mut());
        for (ni, (net, grad)) in nets.into_iter().zip(grads).enumerate() {
            let m = &mut self.adam.m[ni];
            let v = &mut self.adam.v[ni];
            for li in 0..net.layers.len() {
                update_tensor(
                    &mut net.layers[li].weight,
                    &mut grad.layers[li].weight,
                    &mut m.layers[li].weight,
                    &mut v.layers[li].weight,
                    learning_rate,
                    bc1,
                    bc2,
                );
                update_vector(
                    &mut net.layers[li].bias,
                    &mut grad.layers[li].bias,
                    &mut m.layers[li].bias,
                    &mut v.layers[li].bias,
                    learning_rate,
                    bc1,
                    bc2,
                );
            }
        }
        self.version += 1;
    }

    pub fn adam_step_count(&self) -> u64 {
        self.adam.step
    }

    /// Gating probabilities alone, without evaluating the experts.
    pub fn gating_probs(&self, gt: &GeneralizedTime, xr: &RelativeState) -> DVector<f64> {
        let input = self.assemble_input(gt, xr);
        let (logits, _) = self.gating.forward(&input);
        softmax(&logits)
    }

    /// Named parameter tensors (weight, bias) in a stable order; useful for
    /// checkpointing and external gradient verification.
    pub fn tensors(&self) -> Vec<(String, &DMatrix<f64>, &DVector<f64>)> {
        let mut out = Vec::new();
        for (li, l) in self.gating.layers.iter().enumerate() {
            out.push((format!("gating.{li}"), &l.weight, &l.bias));
        }
        for (ei, e) in self.experts.iter().enumerate() {
            for (li, l) in e.layers.iter().enumerate() {
                out.push((format!("expert{ei}.{li}"), &l.weight, &l.bias));
            }
        }
        out
    }

    /// Mutable access to one named tensor pair.
    pub fn tensor_mut(&mut self, name: &str) -> Option<(&mut DMatrix<f64>, &mut DVector<f64>)> {
        let (net, li) = if let Some(rest) = name.strip_prefix("gating.") {
            (&mut self.gating, rest.parse::<usize>().ok()?)
        } else if let Some(rest) = name.strip_prefix("expert") {
            let (ei, li) = rest.split_once('.')?;
            let ei = ei.parse::<usize>().ok()?;
            (self.experts.get_mut(ei)?, li.parse::<usize>().ok()?)
        } else {
            return None;
        };
        let layer = net.layers.get_mut(li)?;
        Some((&mut layer.weight, &mut layer.bias))
    }
}

#[cfg(test)]
impl ForwardTrace {
    /// Trace with prescribed gating probabilities and expert outputs; only
    /// valid for loss-value computations, not for backpropagation.
    pub(crate) fn synthetic(p: DVector<f64>, expert_outputs: Vec<DVector<f64>>) -> Self {
        let mut blended = DVector::zeros(expert_outputs[0].len());
        for (pi, out) in p.iter().zip(expert_outputs.iter()) {
            blended.axpy(*pi, out, 1.0);
        }
        ForwardTrace {
            input: DVector::zeros(0),
            p,
            expert_outputs,
            blended,
            gating_trace: MlpTrace { input: DVector::zeros(0), post: Vec::new() },
            expert_traces: Vec::new(),
            version: 0,
        }
    }
}

fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let shift = logits.max();
    let mut p = logits.map(|v| (v - shift).exp());
    let sum = p.sum();
    p /= sum;
    p
}

#[allow(clippy::too_many_arguments)]
fn update_tensor(
    theta: &mut DMatrix<f64>,
    grad: &mut DMatrix<f64>,
    m: &mut DMatrix<f64>,
    v: &mut DMatrix<f64>,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPSILON);
        grad[i] = 0.0;
    }
}

#[allow(clippy::too_many_arguments)]
fn update_vector(
    theta: &mut DVector<f64>,
    grad: &mut DVector<f64>,
    m: &mut DVector<f64>,
    v: &mut DVector<f64>,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPSILON);
        grad[i] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config(experts: usize, seed: u64) -> MenConfig {
        MenConfig {
            num_experts: experts,
            expert_hidden: vec![8],
            gating_hidden: vec![6],
            seed,
            ..MenConfig::default()
        }
    }

    fn any_inputs() -> (GeneralizedTime, RelativeState) {
        let gt = GeneralizedTime {
            phases: [0.3, 0.0],
            phase_rates: [2.0, 0.0],
            bumps: [(std::f64::consts::PI * 0.3).sin(), 0.0],
        };
        let xr = RelativeState {
            values: nalgebra::Vector6::new(0.05, -0.02, 0.1, 0.0, 0.02, -0.04),
        };
        (gt, xr)
    }

    #[test]
    fn softmax_is_normalized_and_positive() {
        let policy = MenPolicy::new(tiny_config(4, 1));
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        assert!((trace.p.sum() - 1.0).abs() < 1e-12);
        assert!(trace.p.iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn zero_expert_heads_blend_to_zero() {
        let mut cfg = tiny_config(4, 2);
        cfg.expert_head_scale = 0.0;
        let policy = MenPolicy::new(cfg);
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        assert_eq!(trace.blended, DVector::zeros(6));
    }

    #[test]
    fn single_expert_blend_is_identity() {
        let policy = MenPolicy::new(tiny_config(1, 3));
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        assert_eq!(trace.p.len(), 1);
        assert_relative_eq!(trace.p[0], 1.0, epsilon = 1e-15);
        assert_eq!(trace.blended, trace.expert_outputs[0]);
    }

    #[test]
    fn equal_logits_give_uniform_gating() {
        let mut policy = MenPolicy::new(tiny_config(4, 4));
        // zero the whole gating network: logits identically zero
        for l in &mut policy.gating.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        for i in 0..4 {
            assert_relative_eq!(trace.p[i], 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn blend_identity_holds() {
        let mut policy = MenPolicy::new(tiny_config(3, 5));
        // give experts nonzero heads
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for e in &mut policy.experts {
            let last = e.layers.len() - 1;
            e.layers[last].weight.apply(|v| *v = rng.random::<f64>() - 0.5);
        }
        policy.version += 1;
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        let mut manual = DVector::zeros(6);
        for i in 0..3 {
            manual.axpy(trace.p[i], &trace.expert_outputs[i], 1.0);
        }
        assert_relative_eq!((&trace.blended - &manual).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_coefficients_leave_gradients_unchanged() {
        let mut policy = MenPolicy::new(tiny_config(2, 6));
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        let a = vec![DVector::zeros(6); 2];
        let b = vec![0.0; 2];
        policy.accumulate_output_gradients(&trace, &a, &b).unwrap();
        assert!(policy.gating_grads.layers.iter().all(|l| l.weight.amax() == 0.0));
        assert!(policy.expert_grads.iter().all(|g| g.layers.iter().all(|l| l.weight.amax() == 0.0)));
    }

    #[test]
    fn constant_gating_adjoint_gives_zero_gradient() {
        // sum_i p_i is identically 1, so b_i = 1 for all i must produce a
        // zero gating gradient
        let mut policy = MenPolicy::new(tiny_config(4, 7));
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        let a = vec![DVector::zeros(6); 4];
        let b = vec![1.0; 4];
        policy.accumulate_output_gradients(&trace, &a, &b).unwrap();
        let max = policy
            .gating_grads
            .layers
            .iter()
            .map(|l| l.weight.amax().max(l.bias.amax()))
            .fold(0.0, f64::max);
        assert!(max < 1e-14, "gating gradient should vanish, got {max:e}");
    }

    #[test]
    fn stale_trace_rejected() {
        let mut policy = MenPolicy::new(tiny_config(2, 8));
        let (gt, xr) = any_inputs();
        let trace = policy.forward(&gt, &xr);
        policy.adam_step(1e-3);
        let a = vec![DVector::zeros(6); 2];
        let b = vec![0.0; 2];
        assert!(policy.accumulate_output_gradients(&trace, &a, &b).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut policy = MenPolicy::new(tiny_config(3, 11));
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        // nonzero heads so expert outputs respond to parameters
        for e in &mut policy.experts {
            let last = e.layers.len() - 1;
            e.layers[last].weight.apply(|v| *v = 0.3 * (rng.random::<f64>() - 0.5));
        }
        let (gt, xr) = any_inputs();
        // random adjoints define the scalar J = sum_i a_i . pi_i + b_i p_i
        let a: Vec<DVector<f64>> =
            (0..3).map(|_| DVector::from_fn(6, |_, _| rng.random::<f64>() - 0.5)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let eval = |policy: &MenPolicy| {
            let trace = policy.forward(&gt, &xr);
            let mut j = 0.0;
            for i in 0..3 {
                j += a[i].dot(&trace.expert_outputs[i]) + b[i] * trace.p[i];
            }
            j
        };
        let trace = policy.forward(&gt, &xr);
        policy.accumulate_output_gradients(&trace, &a, &b).unwrap();

        let h = 1e-6;
        // sample parameters across every tensor
        let names: Vec<String> =
            policy.tensors().iter().map(|(n, _, _)| n.clone()).collect();
        let mut checked = 0;
        for name in names {
            for k in 0..7 {
                let (flat_idx, grad_val, orig) = {
                    let (w, _) = policy.tensor_mut(&name).unwrap();
                    if w.len() == 0 {
                        continue;
                    }
                    let idx = (k * 7919) % w.len();
                    (idx, f64::NAN, w[idx])
                };
                let _ = grad_val;
                {
                    let (w, _) = policy.tensor_mut(&name).unwrap();
                    w[flat_idx] = orig + h;
                }
                let up = eval(&policy);
                {
                    let (w, _) = policy.tensor_mut(&name).unwrap();
                    w[flat_idx] = orig - h;
                }
                let dn = eval(&policy);
                {
                    let (w, _) = policy.tensor_mut(&name).unwrap();
                    w[flat_idx] = orig;
                }
                let fd = (up - dn) / (2.0 * h);
                // locate the matching gradient entry
                let grad = {
                    if let Some(rest) = name.strip_prefix("gating.") {
                        let li: usize = rest.parse().unwrap();
                        policy.gating_grads.layers[li].weight[flat_idx]
                    } else {
                        let rest = name.strip_prefix("expert").unwrap();
                        let (ei, li) = rest.split_once('.').unwrap();
                        let (ei, li): (usize, usize) = (ei.parse().unwrap(), li.parse().unwrap());
                        policy.expert_grads[ei].layers[li].weight[flat_idx]
                    }
                };
                assert_relative_eq!(grad, fd, max_relative = 1e-4, epsilon = 1e-8);
                checked += 1;
            }
        }
        assert!(checked >= 50, "checked {checked} parameters");
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut policy = MenPolicy::new(tiny_config(2, 12));
        let before = policy.gating.layers[0].weight.clone();
        policy.adam_step(1e-3);
        assert_eq!(policy.gating.layers[0].weight, before);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // first bias-corrected step moves by ~ -lr * sign(g)
        let mut policy = MenPolicy::new(tiny_config(2, 13));
        let before = policy.gating.layers[0].weight[(0, 0)];
        policy.gating_grads.layers[0].weight[(0, 0)] = 0.5;
        policy.adam_step(1e-3);
        let delta = policy.gating.layers[0].weight[(0, 0)] - before;
        assert_relative_eq!(delta, -1e-3, max_relative = 1e-6);
        // gradient buffer zeroed, step counter advanced
        assert_eq!(policy.gating_grads.layers[0].weight[(0, 0)], 0.0);
        assert_eq!(policy.adam_step_count(), 1);
    }

    #[test]
    fn adam_constant_gradient_moves_monotonically() {
        let mut policy = MenPolicy::new(tiny_config(2, 14));
        let mut prev = policy.gating.layers[0].weight[(0, 0)];
        for _ in 0..2 {
            policy.gating_grads.layers[0].weight[(0, 0)] = 0.5;
            policy.adam_step(1e-3);
            let cur = policy.gating.layers[0].weight[(0, 0)];
            assert!(cur < prev, "parameter must move against the gradient sign");
            prev = cur;
        }
    }

    #[test]
    fn too_few_experts_rejected() {
        let cfg = tiny_config(2, 15);
        assert!(cfg.validate(3).is_err());
        assert!(cfg.validate(2).is_ok());
    }
}
