//! Control Hamiltonian H(x, u, t) = L(x, u, t) + dV/dx . f(x, u, t) with the
//! Lagrangian L = l + nu' g + sum_i b(h_i).
//!
//! Control-affine dynamics, quadratic cost, and affine constraints make H and
//! its exact input gradient cheap to evaluate for any candidate input, which
//! is what the loss functions do many times per learner iteration.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::model::{flow_jacobians, CostSpec, Mode, GRAVITY};
use crate::solver::barrier::BarrierParams;
use crate::solver::problem::OcProblem;

/// Snapshot of solver quantities at one (x, t) sufficient to evaluate
/// H(x, u, t) and dH/du exactly for any u.
#[derive(Clone, Debug)]
pub struct HamiltonianData {
    /// Absolute state.
    pub x: Vector6<f64>,
    /// Tracking error x - x_d(t) (the reference is job-specific, so the
    /// error is carried explicitly).
    pub x_err: Vector6<f64>,
    pub t: f64,
    /// Value-function gradient at x.
    pub dvdx: Vector6<f64>,
    /// Value-function time derivative at (x, t).
    pub dvdt: f64,
    /// Lagrange multipliers; length matches the mode's equality rows.
    pub nu: DVector<f64>,
    pub mode: Mode,
}

/// Walker-specialized Hamiltonian evaluator. The mode-dependent constraint
/// rows are unit selectors on the input, so evaluation avoids matrix algebra
/// entirely.
#[derive(Clone, Debug)]
pub struct WalkerHamiltonian {
    pub q: Matrix6<f64>,
    pub r: Matrix6<f64>,
    pub barrier: BarrierParams,
}

impl WalkerHamiltonian {
    pub fn new(cost: &CostSpec, barrier: BarrierParams) -> Self {
        Self { q: cost.q, r: cost.r, barrier }
    }

    /// H and its exact input gradient at input u.
    pub fn eval(&self, data: &HamiltonianData, u: &Vector6<f64>) -> (f64, Vector6<f64>) {
        let e = &data.x_err;
        let mut h = (e.transpose() * self.q * e + u.transpose() * self.r * u)[0];
        let mut dhdu = 2.0 * self.r * u;

        // nu' g: constraint rows select input entries (swing forces, stance
        // foot velocities). Row order matches model::mode_constraints.
        let flags = data.mode.contact_flags();
        let mut row = 0;
        for (i, contact) in flags.iter().enumerate() {
            if !contact {
                for comp in 0..2 {
                    let nu_r = data.nu[row];
                    h += nu_r * u[2 * i + comp];
                    dhdu[2 * i + comp] += nu_r;
                    row += 1;
                }
            }
        }
        for (i, contact) in flags.iter().enumerate() {
            if *contact {
                let nu_r = data.nu[row];
                h += nu_r * u[4 + i];
                dhdu[4 + i] += nu_r;
                row += 1;
            }
        }
        debug_assert_eq!(row, data.nu.len(), "multiplier length must match mode rows");

        // barrier on unilateral forces of contact feet
        for (i, contact) in flags.iter().enumerate() {
            if *contact {
                let fz = u[2 * i + 1];
                h += self.barrier.value(fz);
                dhdu[2 * i + 1] += self.barrier.derivative(fz);
            }
        }

        // dV/dx . f(x, u)
        let dv = &data.dvdx;
        h += dv[0] * data.x[2]
            + dv[1] * data.x[3]
            + dv[2] * (u[0] + u[2]) / crate::model::MASS
            + dv[3] * ((u[1] + u[3]) / crate::model::MASS + GRAVITY)
            + dv[4] * u[4]
            + dv[5] * u[5];
        dhdu[0] += dv[2] / crate::model::MASS;
        dhdu[2] += dv[2] / crate::model::MASS;
        dhdu[1] += dv[3] / crate::model::MASS;
        dhdu[3] += dv[3] / crate::model::MASS;
        dhdu[4] += dv[4];
        dhdu[5] += dv[5];

        (h, dhdu)
    }
}

/// Lagrangian L = l + nu' g + sum_i b(h_i) for the walker at (x, u, t).
/// The tracking error is taken from the cost's own reference.
pub fn eval_lagrangian(
    x: &Vector6<f64>,
    u: &Vector6<f64>,
    t: f64,
    nu: &DVector<f64>,
    mode: Mode,
    cost: &CostSpec,
    barrier: BarrierParams,
) -> Result<f64, crate::solver::SolverError> {
    let (gx, gu, g0) = crate::model::mode_constraints(mode);
    if nu.len() != g0.len() {
        return Err(crate::solver::SolverError::MultiplierDimension {
            expected: g0.len(),
            found: nu.len(),
        });
    }
    let e = x - cost.desired.at(t).to_vector();
    let mut value = cost.stage_from_error(&e, u);
    let xd = DVector::from_row_slice(x.as_slice());
    let ud = DVector::from_row_slice(u.as_slice());
    let g = gx * &xd + gu * &ud + g0;
    value += nu.dot(&g);
    for rowi in crate::model::mode_inequalities(mode) {
        value += barrier.value(rowi.eval(&xd, &ud));
    }
    Ok(value)
}

/// Spec-level Hamiltonian evaluation for the walker (see `WalkerHamiltonian`
/// for the reusable evaluator).
pub fn eval_hamiltonian(
    data: &HamiltonianData,
    u: &Vector6<f64>,
    cost: &CostSpec,
    barrier: BarrierParams,
) -> (f64, Vector6<f64>) {
    WalkerHamiltonian::new(cost, barrier).eval(data, u)
}

/// Generic Hamiltonian evaluation through the problem interface. Serves as
/// the independent route for consistency checks against the walker fast path
/// and as the evaluator for non-walker problems.
pub fn eval_problem_hamiltonian<P: OcProblem>(
    problem: &P,
    barrier: BarrierParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    t: f64,
    dvdx: &DVector<f64>,
    nu: &DVector<f64>,
) -> (f64, DVector<f64>) {
    let exp = problem.stage_expansion(x, u, t);
    let mut h = exp.value;
    let mut dhdu = exp.du.clone();

    let eq = problem.equality(t);
    if eq.rows() > 0 {
        let g = eq.residual(x, u);
        h += nu.dot(&g);
        dhdu += eq.gu.transpose() * nu;
    }
    for rowi in problem.inequalities(t).iter() {
        let hv = rowi.eval(x, u);
        h += barrier.value(hv);
        dhdu.axpy(barrier.derivative(hv), &rowi.hu, 1.0);
    }
    let f = problem.flow(x, u, t);
    h += dvdx.dot(&f);
    let (_, b) = problem.flow_jacobians(x, u, t);
    dhdu += b.transpose() * dvdx;
    (h, dhdu)
}

/// Affine model of the flow map: f(x, u) = A x + B u + c for the walker.
pub fn walker_flow_matrices() -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let (a6, b6, c6) = flow_jacobians();
    (
        DMatrix::from_fn(6, 6, |i, j| a6[(i, j)]),
        DMatrix::from_fn(6, 6, |i, j| b6[(i, j)]),
        DVector::from_fn(6, |i, _| c6[i]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReferenceTrajectory, WalkerState};
    use crate::solver::problem::ScalarLqr;
    use approx::assert_relative_eq;
    use nalgebra::Matrix6;

    fn barrier() -> BarrierParams {
        BarrierParams::new(0.1, 0.01)
    }

    #[test]
    fn scalar_lqr_hand_evaluation() {
        // x = 1, u = 0.5, dV/dx = 2, no constraints: H = (1 + 0.25) + 2*0.5 = 2.25
        let p = ScalarLqr { q: 1.0, r: 1.0, qf: 1.0 };
        let x = DVector::from_element(1, 1.0);
        let u = DVector::from_element(1, 0.5);
        let dvdx = DVector::from_element(1, 2.0);
        let nu = DVector::zeros(0);
        let (h, dhdu) = eval_problem_hamiltonian(&p, barrier(), &x, &u, 0.0, &dvdx, &nu);
        assert_relative_eq!(h, 2.25, epsilon = 1e-15);
        // dH/du = 2 r u + dV/dx = 1 + 2 = 3
        assert_relative_eq!(dhdu[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_minimizer_has_zero_gradient() {
        let p = ScalarLqr { q: 1.0, r: 1.0, qf: 1.0 };
        let x = DVector::from_element(1, 1.0);
        let dvdx = DVector::from_element(1, 2.0);
        let nu = DVector::zeros(0);
        // argmin_u q x^2 + r u^2 + dvdx u = -dvdx / (2r)
        let u = DVector::from_element(1, -1.0);
        let (_, dhdu) = eval_problem_hamiltonian(&p, barrier(), &x, &u, 0.0, &dvdx, &nu);
        assert!(dhdu[0].abs() < 1e-10);
    }

    #[test]
    fn lagrangian_vanishes_at_reference() {
        let cost = CostSpec::with_default_weights(ReferenceTrajectory::forward(0.0));
        let x = cost.desired.at(0.0).to_vector();
        // all h >> delta so the barrier is ~ -mu ln(h); pick forces far from the seam
        let mut u = Vector6::zeros();
        u[1] = 1.0;
        u[3] = 1.0;
        let nu = DVector::zeros(2);
        let value =
            eval_lagrangian(&x, &u, 0.0, &nu, Mode::Stance, &cost, barrier()).unwrap();
        // remaining terms: u'Ru (tiny) and -mu ln(1) = 0 per foot
        assert!(value.abs() < 1e-3, "near-zero Lagrangian, got {value}");
    }

    #[test]
    fn lagrangian_multiplier_free_case() {
        let cost = CostSpec::with_default_weights(ReferenceTrajectory::forward(0.0));
        let x = cost.desired.at(0.5).to_vector();
        let mut u = Vector6::zeros();
        u[1] = 2.0;
        u[3] = 3.0;
        u[4] = 0.2;
        let nu = DVector::zeros(2);
        let with_nu = eval_lagrangian(&x, &u, 0.5, &nu, Mode::Stance, &cost, barrier()).unwrap();
        // nu = 0 reduces to l + sum b
        let e = Vector6::zeros();
        let l = cost.stage_from_error(&e, &u);
        let b = barrier().value(2.0) + barrier().value(3.0);
        assert_relative_eq!(with_nu, l + b, epsilon = 1e-12);
    }

    #[test]
    fn lagrangian_unit_tracking_error() {
        // x - x_d = e1, Q = I, R = I, u = 0, nu = 0, no inequalities in swing1
        // for foot 1 force rows? Swing1 has F2z >= 0 barrier; pick u = 0 so
        // b(0) contributes; instead use a custom check with barrier excluded
        // by evaluating the pure-cost part through a stance-free mode is not
        // possible, so verify against the hand value including b(0).
        let desired = ReferenceTrajectory::Hold(Box::new(WalkerState::zeros()));
        let cost =
            CostSpec::new(Matrix6::identity(), Matrix6::identity(), Matrix6::identity(), desired)
                .unwrap();
        let mut x = Vector6::zeros();
        x[0] = 1.0;
        let u = Vector6::zeros();
        let nu = DVector::zeros(3);
        let value =
            eval_lagrangian(&x, &u, 0.0, &nu, Mode::Swing1, &cost, barrier()).unwrap();
        let b0 = barrier().value(0.0);
        assert_relative_eq!(value, 1.0 + b0, epsilon = 1e-12);
    }

    #[test]
    fn multiplier_dimension_checked() {
        let cost = CostSpec::with_default_weights(ReferenceTrajectory::forward(0.0));
        let nu = DVector::zeros(5);
        assert!(eval_lagrangian(
            &Vector6::zeros(),
            &Vector6::zeros(),
            0.0,
            &nu,
            Mode::Stance,
            &cost,
            barrier()
        )
        .is_err());
    }

    #[test]
    fn fast_path_matches_generic_route() {
        use crate::model::{GaitSpec, ModeSchedule};
        use crate::solver::problem::WalkerOcp;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let schedule: ModeSchedule = GaitSpec::walk().schedule;
        let cost = CostSpec::with_default_weights(ReferenceTrajectory::forward(0.3));
        let ocp = WalkerOcp::new(cost.clone(), schedule.clone());
        let wh = WalkerHamiltonian::new(&cost, barrier());
        for _ in 0..100 {
            let t: f64 = rng.random::<f64>() * 3.0;
            let mode = schedule.mode_at(t);
            let rows = crate::model::mode_constraints(mode).2.len();
            let x = Vector6::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0);
            let u = Vector6::from_fn(|_, _| rng.random::<f64>() * 60.0 - 30.0);
            let dvdx = Vector6::from_fn(|_, _| rng.random::<f64>() * 10.0 - 5.0);
            let nu = DVector::from_fn(rows, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let data = HamiltonianData {
                x,
                x_err: x - cost.desired.at(t).to_vector(),
                t,
                dvdx,
                dvdt: 0.0,
                nu: nu.clone(),
                mode,
            };
            let (h_fast, g_fast) = wh.eval(&data, &u);
            let (h_gen, g_gen) = eval_problem_hamiltonian(
                &ocp,
                barrier(),
                &DVector::from_row_slice(x.as_slice()),
                &DVector::from_row_slice(u.as_slice()),
                t,
                &DVector::from_row_slice(dvdx.as_slice()),
                &nu,
            );
            assert_relative_eq!(h_fast, h_gen, epsilon = 1e-9, max_relative = 1e-9);
            for i in 0..6 {
                assert_relative_eq!(g_fast[i], g_gen[i], epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cost = CostSpec::with_default_weights(ReferenceTrajectory::forward(0.1));
        let wh = WalkerHamiltonian::new(&cost, barrier());
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let mode = Mode::ALL[trial % 3];
            let rows = crate::model::mode_constraints(mode).2.len();
            let x = Vector6::from_fn(|_, _| rng.random::<f64>() - 0.5);
            let data = HamiltonianData {
                x,
                x_err: Vector6::from_fn(|_, _| rng.random::<f64>() - 0.5),
                t: 0.0,
                dvdx: Vector6::from_fn(|_, _| rng.random::<f64>() * 20.0 - 10.0),
                dvdt: 0.0,
                nu: DVector::from_fn(rows, |_, _| rng.random::<f64>() - 0.5),
                mode,
            };
            // forces span the barrier seam but stay in a well-conditioned
            // range; velocities are m/s scale
            let mut u = Vector6::from_fn(|_, _| rng.random::<f64>() * 91.0 - 1.0);
            u[4] = rng.random::<f64>() * 4.0 - 2.0;
            u[5] = rng.random::<f64>() * 4.0 - 2.0;
            let (_, grad) = wh.eval(&data, &u);
            let h0 = 1e-6;
            for i in 0..6 {
                let mut up = u;
                up[i] += h0;
                let mut dn = u;
                dn[i] -= h0;
                let fd = (wh.eval(&data, &up).0 - wh.eval(&data, &dn).0) / (2.0 * h0);
                assert_relative_eq!(grad[i], fd, max_relative = 1e-6, epsilon = 1e-6);
            }
        }
    }
}
