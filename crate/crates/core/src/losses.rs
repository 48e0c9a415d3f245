//! The Hamiltonian loss family for mixture-of-experts imitation: the blended
//! loss L1, the prior-weighted loss L2, the log-partitioned loss L3 with its
//! posterior, the guided variants, and the behavioral-cloning baseline.
//!
//! Every loss evaluates to a scalar plus per-expert gradient coefficients:
//! output adjoints a_i (multiplying dpi_i/dtheta) and gating adjoints b_i
//! (multiplying dp_i/dtheta). The policy's backpropagation consumes those
//! directly, so full Jacobians never appear.

use nalgebra::{DVector, Vector6};
use thiserror::Error;

use crate::model::NUM_MODES;
use crate::policy::{ForwardTrace, MenPolicy, PolicyError, POLICY_OUTPUT_DIM};
use crate::solver::{HamiltonianData, WalkerHamiltonian};
use crate::training::ReplayTuple;

/// Probability floor inside cross-entropy logarithms; softmax outputs are
/// strictly positive but can underflow.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("beta must be positive for {0}")]
    NonPositiveBeta(&'static str),
    #[error("lambda must be non-negative")]
    NegativeLambda,
    #[error("the guided loss applies to L1/L2/L3, not the BC baseline")]
    GuidedBc,
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossVariant {
    L1,
    L2,
    L3,
    Bc,
}

impl LossVariant {
    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::L1 => "l1",
            LossVariant::L2 => "l2",
            LossVariant::L3 => "l3",
            LossVariant::Bc => "bc",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "l1" => Some(LossVariant::L1),
            "l2" => Some(LossVariant::L2),
            "l3" => Some(LossVariant::L3),
            "bc" => Some(LossVariant::Bc),
            _ => None,
        }
    }
}

/// Loss selection: expert-loss variant, optional guide term, guide weight
/// lambda, inverse temperature beta.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossKind {
    pub variant: LossVariant,
    pub guided: bool,
    pub lambda: f64,
    pub beta: f64,
}

impl LossKind {
    pub fn new(variant: LossVariant, guided: bool, lambda: f64, beta: f64) -> Result<Self, LossError> {
        let kind = Self { variant, guided, lambda, beta };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if matches!(self.variant, LossVariant::L3 | LossVariant::Bc) && !(self.beta > 0.0) {
            return Err(LossError::NonPositiveBeta(match self.variant {
                LossVariant::L3 => "L3",
                _ => "BC",
            }));
        }
        if self.lambda < 0.0 {
            return Err(LossError::NegativeLambda);
        }
        if self.guided && self.variant == LossVariant::Bc {
            return Err(LossError::GuidedBc);
        }
        Ok(())
    }
}

/// Loss value plus everything the gradient assembly needs.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub value: f64,
    /// Per-expert Hamiltonians (NMSE terms for the BC baseline).
    pub per_expert_h: Vec<f64>,
    pub p: DVector<f64>,
    /// Posterior probabilities where the loss defines them (L3, BC).
    pub q: Option<DVector<f64>>,
    /// Output adjoints a_i, length 6 each.
    pub expert_coeffs: Vec<DVector<f64>>,
    /// Gating adjoints b_i.
    pub gating_coeffs: Vec<f64>,
}

/// Maps hybrid-system modes onto experts for the guided losses. The default
/// assigns mode k to expert k.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeExpertMap(pub [usize; NUM_MODES]);

impl Default for ModeExpertMap {
    fn default() -> Self {
        Self([0, 1, 2])
    }
}

impl ModeExpertMap {
    /// Expands M-dimensional mode probabilities to an E-dimensional target;
    /// unmapped experts get zero mass.
    pub fn expand(&self, mode_probs: &[f64; NUM_MODES], experts: usize) -> Vec<f64> {
        let mut target = vec![0.0; experts];
        for (mode, p) in mode_probs.iter().enumerate() {
            let e = self.0[mode];
            assert!(e < experts, "mode {mode} maps to expert {e} but only {experts} exist");
            target[e] += p;
        }
        target
    }
}

fn expert_vec6(out: &DVector<f64>) -> Vector6<f64> {
    Vector6::from_row_slice(out.as_slice())
}

fn per_expert_hamiltonians(
    trace: &ForwardTrace,
    hdata: &HamiltonianData,
    ham: &WalkerHamiltonian,
) -> (Vec<f64>, Vec<Vector6<f64>>) {
    let mut hs = Vec::with_capacity(trace.expert_outputs.len());
    let mut grads = Vec::with_capacity(trace.expert_outputs.len());
    for out in &trace.expert_outputs {
        let (h, dhdu) = ham.eval(hdata, &expert_vec6(out));
        hs.push(h);
        grads.push(dhdu);
    }
    (hs, grads)
}

/// L1: Hamiltonian of the blended control.
pub fn loss_l1(trace: &ForwardTrace, hdata: &HamiltonianData, ham: &WalkerHamiltonian) -> LossEval {
    let (h_blend, dhdu_blend) = ham.eval(hdata, &expert_vec6(&trace.blended));
    let (per_expert_h, _) = per_expert_hamiltonians(trace, hdata, ham);
    let e = trace.expert_outputs.len();
    let mut expert_coeffs = Vec::with_capacity(e);
    let mut gating_coeffs = Vec::with_capacity(e);
    for i in 0..e {
        expert_coeffs.push(DVector::from_fn(POLICY_OUTPUT_DIM, |r, _| trace.p[i] * dhdu_blend[r]));
        gating_coeffs.push(dhdu_blend.dot(&expert_vec6(&trace.expert_outputs[i])));
    }
    LossEval {
        value: h_blend,
        per_expert_h,
        p: trace.p.clone(),
        q: None,
        expert_coeffs,
        gating_coeffs,
    }
}

/// L2: prior-weighted sum of per-expert Hamiltonians.
pub fn loss_l2(trace: &ForwardTrace, hdata: &HamiltonianData, ham: &WalkerHamiltonian) -> LossEval {
    let (per_expert_h, dhdus) = per_expert_hamiltonians(trace, hdata, ham);
    let e = per_expert_h.len();
    let value: f64 = (0..e).map(|i| trace.p[i] * per_expert_h[i]).sum();
    let mut expert_coeffs = Vec::with_capacity(e);
    let mut gating_coeffs = Vec::with_capacity(e);
    for i in 0..e {
        expert_coeffs.push(DVector::from_fn(POLICY_OUTPUT_DIM, |r, _| trace.p[i] * dhdus[i][r]));
        gating_coeffs.push(per_expert_h[i]);
    }
    LossEval {
        value,
        per_expert_h,
        p: trace.p.clone(),
        q: None,
        expert_coeffs,
        gating_coeffs,
    }
}

/// Posterior probability that expert i minimizes the Hamiltonian:
/// q_i proportional to p_i exp(-beta (H_i + dV/dt)), computed with a
/// log-sum-exp shift.
pub fn posterior(p: &DVector<f64>, h: &[f64], dvdt: f64, beta: f64) -> DVector<f64> {
    let (q, _) = posterior_with_logz(p, h, dvdt, beta);
    q
}

/// Returns (q, logZ) with logZ = log sum_i p_i exp(-beta (H_i + dvdt)).
fn posterior_with_logz(p: &DVector<f64>, h: &[f64], dvdt: f64, beta: f64) -> (DVector<f64>, f64) {
    let e = h.len();
    let logits: Vec<f64> = (0..e)
        .map(|i| p[i].max(1e-300).ln() - beta * (h[i] + dvdt))
        .collect();
    let shift = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - shift).exp()).sum();
    let logz = shift + z.ln();
    let q = DVector::from_fn(e, |i, _| (logits[i] - logz).exp());
    (q, logz)
}

/// L3: log-partitioned Hamiltonian loss.
pub fn loss_l3(
    trace: &ForwardTrace,
    hdata: &HamiltonianData,
    ham: &WalkerHamiltonian,
    beta: f64,
) -> LossEval {
    let (per_expert_h, dhdus) = per_expert_hamiltonians(trace, hdata, ham);
    let (q, logz) = posterior_with_logz(&trace.p, &per_expert_h, hdata.dvdt, beta);
    let value = -logz / beta;
    let e = per_expert_h.len();
    let mut expert_coeffs = Vec::with_capacity(e);
    let mut gating_coeffs = Vec::with_capacity(e);
    for i in 0..e {
        expert_coeffs.push(DVector::from_fn(POLICY_OUTPUT_DIM, |r, _| q[i] * dhdus[i][r]));
        // q_i / p_i computed in log space so vanishing priors stay finite
        let ratio = (-beta * (per_expert_h[i] + hdata.dvdt) - logz).exp();
        gating_coeffs.push(-ratio / beta);
    }
    LossEval {
        value,
        per_expert_h,
        p: trace.p.clone(),
        q: Some(q),
        expert_coeffs,
        gating_coeffs,
    }
}

/// Reformulated L3: sum_i qbar_i H_i + (1/beta) CE(qbar, p) with the
/// posterior treated as a constant. Its gradient coefficients must equal
/// those of `loss_l3`; the value differs by the dV/dt bias.
pub fn loss_l3_reformulated(
    trace: &ForwardTrace,
    hdata: &HamiltonianData,
    ham: &WalkerHamiltonian,
    beta: f64,
) -> LossEval {
    let (per_expert_h, dhdus) = per_expert_hamiltonians(trace, hdata, ham);
    let (qbar, logz) = posterior_with_logz(&trace.p, &per_expert_h, hdata.dvdt, beta);
    let e = per_expert_h.len();
    let qbar_slice: Vec<f64> = qbar.iter().cloned().collect();
    let p_slice: Vec<f64> = trace.p.iter().cloned().collect();
    let ce = cross_entropy(&qbar_slice, &p_slice);
    let value: f64 = (0..e).map(|i| qbar[i] * per_expert_h[i]).sum::<f64>() + ce / beta;
    let mut expert_coeffs = Vec::with_capacity(e);
    let mut gating_coeffs = Vec::with_capacity(e);
    for i in 0..e {
        // d/dtheta of sum_i qbar_i H_i(pi_i(theta)) with qbar detached
        expert_coeffs.push(DVector::from_fn(POLICY_OUTPUT_DIM, |r, _| qbar[i] * dhdus[i][r]));
        // d/dp_i of (1/beta) CE(qbar, p) = -(1/beta) qbar_i / p_i; same
        // log-space ratio as loss_l3
        let ratio = (-beta * (per_expert_h[i] + hdata.dvdt) - logz).exp();
        gating_coeffs.push(-ratio / beta);
    }
    LossEval {
        value,
        per_expert_h,
        p: trace.p.clone(),
        q: Some(qbar),
        expert_coeffs,
        gating_coeffs,
    }
}

/// Cross-entropy -sum_i target_i log(probs_i) with the probability floor.
pub fn cross_entropy(target: &[f64], probs: &[f64]) -> f64 {
    assert_eq!(target.len(), probs.len());
    -target
        .iter()
        .zip(probs.iter())
        .map(|(t, p)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Guided loss L_G = L_E + lambda L_D. For L1/L2 the guide is CE(ptilde, p);
/// for L3 it is CE(ptilde, q), differentiated through both the prior and the
/// Hamiltonian dependencies of the posterior.
pub fn loss_guided(
    kind: &LossKind,
    trace: &ForwardTrace,
    hdata: &HamiltonianData,
    ham: &WalkerHamiltonian,
    mode_probs: &[f64; NUM_MODES],
    map: &ModeExpertMap,
) -> Result<LossEval, LossError> {
    kind.validate()?;
    let e = trace.expert_outputs.len();
    let ptilde = map.expand(mode_probs, e);
    let lambda = kind.lambda;
    let mut eval = match kind.variant {
        LossVariant::L1 => loss_l1(trace, hdata, ham),
        LossVariant::L2 => loss_l2(trace, hdata, ham),
        LossVariant::L3 => loss_l3(trace, hdata, ham, kind.beta),
        LossVariant::Bc => return Err(LossError::GuidedBc),
    };
    match kind.variant {
        LossVariant::L1 | LossVariant::L2 => {
            let p_slice: Vec<f64> = eval.p.iter().cloned().collect();
            eval.value += lambda * cross_entropy(&ptilde, &p_slice);
            for i in 0..e {
                if eval.p[i] >= PROB_FLOOR {
                    eval.gating_coeffs[i] -= lambda * ptilde[i] / eval.p[i];
                }
            }
        }
        LossVariant::L3 => {
            let q = eval.q.as_ref().expect("L3 defines a posterior").clone();
            let q_slice: Vec<f64> = q.iter().cloned().collect();
            eval.value += lambda * cross_entropy(&ptilde, &q_slice);
            // dCE/dq_i, flat below the floor
            let dce_dq: Vec<f64> = (0..e)
                .map(|i| if q[i] >= PROB_FLOOR { -ptilde[i] / q[i] } else { 0.0 })
                .collect();
            let beta = kind.beta;
            for j in 0..e {
                // through the prior: dq_i/dp_j = delta_ij q_i/p_i - q_i q_j/p_j
                let mut dp = 0.0;
                for i in 0..e {
                    if dce_dq[i] == 0.0 {
                        continue;
                    }
                    let mut d = -q[i] * q[j] / eval.p[j].max(PROB_FLOOR);
                    if i == j {
                        d += q[i] / eval.p[i].max(PROB_FLOOR);
                    }
                    dp += dce_dq[i] * d;
                }
                eval.gating_coeffs[j] += lambda * dp;
                // through the Hamiltonians: dq_i/dH_j = -beta q_i (delta_ij - q_j)
                let mut dh = 0.0;
                for i in 0..e {
                    if dce_dq[i] == 0.0 {
                        continue;
                    }
                    let mut d = q[j];
                    if i == j {
                        d -= 1.0;
                    }
                    dh += dce_dq[i] * beta * q[i] * d;
                }
                if dh != 0.0 {
                    let (_, dhdu_j) =
                        ham.eval(hdata, &expert_vec6(&trace.expert_outputs[j]));
                    for r in 0..POLICY_OUTPUT_DIM {
                        eval.expert_coeffs[j][r] += lambda * dh * dhdu_j[r];
                    }
                }
            }
        }
        LossVariant::Bc => unreachable!(),
    }
    Ok(eval)
}

/// Behavioral-cloning baseline: the Hamiltonian and bias term of L3 replaced
/// by the normalized mean-squared error against the MPC action.
pub fn loss_bc(trace: &ForwardTrace, u_mpc: &Vector6<f64>, beta: f64) -> LossEval {
    let e = trace.expert_outputs.len();
    let dim = POLICY_OUTPUT_DIM as f64;
    let nmse: Vec<f64> = trace
        .expert_outputs
        .iter()
        .map(|out| {
            let d = expert_vec6(out) - u_mpc;
            d.norm_squared() / dim
        })
        .collect();
    let (q, logz) = posterior_with_logz(&trace.p, &nmse, 0.0, beta);
    let value = -logz / beta;
    let mut expert_coeffs = Vec::with_capacity(e);
    let mut gating_coeffs = Vec::with_capacity(e);
    for i in 0..e {
        let d = expert_vec6(&trace.expert_outputs[i]) - u_mpc;
        expert_coeffs.push(DVector::from_fn(POLICY_OUTPUT_DIM, |r, _| {
            q[i] * 2.0 * d[r] / dim
        }));
        let ratio = (-beta * nmse[i] - logz).exp();
        gating_coeffs.push(-ratio / beta);
    }
    LossEval {
        value,
        per_expert_h: nmse,
        p: trace.p.clone(),
        q: Some(q),
        expert_coeffs,
        gating_coeffs,
    }
}

/// Evaluates the configured loss for one replay tuple.
pub fn eval_tuple_loss(
    kind: &LossKind,
    trace: &ForwardTrace,
    tuple: &ReplayTuple,
    ham: &WalkerHamiltonian,
    map: &ModeExpertMap,
) -> Result<LossEval, LossError> {
    let hdata = HamiltonianData {
        x: tuple.x_abs.to_vector(),
        x_err: tuple.xr.values,
        t: tuple.t_abs,
        dvdx: tuple.dvdx,
        dvdt: tuple.dvdt,
        nu: tuple.nu.clone(),
        mode: tuple.mode,
    };
    if kind.guided {
        loss_guided(kind, trace, &hdata, ham, &tuple.mode_probs, map)
    } else {
        Ok(match kind.variant {
            LossVariant::L1 => loss_l1(trace, &hdata, ham),
            LossVariant::L2 => loss_l2(trace, &hdata, ham),
            LossVariant::L3 => loss_l3(trace, &hdata, ham, kind.beta),
            LossVariant::Bc => loss_bc(trace, &tuple.u_mpc.to_vector(), kind.beta),
        })
    }
}

/// Empirical cost over a batch: J = (1/B) sum_j L(tuple_j). Gradients are
/// accumulated into the policy's buffers scaled by 1/B; the trainer performs
/// exactly one Adam step per call.
pub fn batch_loss(
    kind: &LossKind,
    batch: &[ReplayTuple],
    policy: &mut MenPolicy,
    ham: &WalkerHamiltonian,
    map: &ModeExpertMap,
) -> Result<f64, LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for tuple in batch {
        let trace = policy.forward(&tuple.gt, &tuple.xr);
        let eval = eval_tuple_loss(kind, &trace, tuple, ham, map)?;
        total += eval.value;
        let a: Vec<DVector<f64>> =
            eval.expert_coeffs.iter().map(|c| c * scale).collect();
        let b: Vec<f64> = eval.gating_coeffs.iter().map(|c| c * scale).collect();
        policy.accumulate_output_gradients(&trace, &a, &b)?;
    }
    Ok(total * scale)
}
