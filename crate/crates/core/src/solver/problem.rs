//! Optimal-control problem interface consumed by the SLQ solver, plus the
//! two concrete problems used in this crate: the hybrid walker and a scalar
//! LQR reference instance.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::model::{
    flow_jacobians, mode_constraints, mode_inequalities, CostSpec, InequalityRow, Mode,
    ModeSchedule, INPUT_DIM, STATE_DIM,
};

/// Second-order expansion of a stage cost about a nominal point.
#[derive(Clone, Debug)]
pub struct CostExpansion {
    pub value: f64,
    pub dx: DVector<f64>,
    pub du: DVector<f64>,
    pub dxx: DMatrix<f64>,
    pub duu: DMatrix<f64>,
    /// Cross term, input rows by state columns.
    pub dux: DMatrix<f64>,
}

impl CostExpansion {
    pub fn zeros(nx: usize, nu: usize) -> Self {
        Self {
            value: 0.0,
            dx: DVector::zeros(nx),
            du: DVector::zeros(nu),
            dxx: DMatrix::zeros(nx, nx),
            duu: DMatrix::zeros(nu, nu),
            dux: DMatrix::zeros(nu, nx),
        }
    }
}

/// Affine equality constraint block g(x, u) = Gx x + Gu u + g0 = 0.
/// May have zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualityConstraint {
    pub gx: DMatrix<f64>,
    pub gu: DMatrix<f64>,
    pub g0: DVector<f64>,
}

impl EqualityConstraint {
    pub fn empty(nx: usize, nu: usize) -> Self {
        Self {
            gx: DMatrix::zeros(0, nx),
            gu: DMatrix::zeros(0, nu),
            g0: DVector::zeros(0),
        }
    }

    pub fn rows(&self) -> usize {
        self.g0.len()
    }

    pub fn residual(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.gx * x + &self.gu * u + &self.g0
    }
}

/// Continuous-time optimal-control problem with affine constraints.
///
/// `stage_expansion` must be the exact second-order model whenever the cost
/// is quadratic; the solver trusts it for Hamiltonian gradients.
pub trait OcProblem {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Flow map f(x, u, t).
    fn flow(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;
    /// A = df/dx, B = df/du at (x, u, t).
    fn flow_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64)
        -> (DMatrix<f64>, DMatrix<f64>);

    /// Intermediate cost l(x, u, t) (pure cost, no constraint terms).
    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64;
    fn stage_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> CostExpansion;

    /// Final cost phi(x) evaluated at the horizon end time.
    fn terminal_cost(&self, x: &DVector<f64>, t: f64) -> f64;
    /// (phi, dphi/dx, d2phi/dx2).
    fn terminal_expansion(&self, x: &DVector<f64>, t: f64) -> (f64, DVector<f64>, DMatrix<f64>);

    /// Equality constraints active at time t.
    fn equality(&self, t: f64) -> Arc<EqualityConstraint>;
    /// Inequality rows h_i(x, u) >= 0 active at time t.
    fn inequalities(&self, t: f64) -> Arc<Vec<InequalityRow>>;

    /// Input guess used to seed the first rollout of a cold solve.
    fn initial_input(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(self.input_dim())
    }
}

/// The walker tracking problem: linear dynamics, quadratic tracking cost,
/// mode-dependent constraints from a gait schedule.
#[derive(Clone, Debug)]
pub struct WalkerOcp {
    pub cost: CostSpec,
    pub schedule: ModeSchedule,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q2: DMatrix<f64>,
    r2: DMatrix<f64>,
    eq_cache: [Arc<EqualityConstraint>; 3],
    ineq_cache: [Arc<Vec<InequalityRow>>; 3],
}

impl WalkerOcp {
    pub fn new(cost: CostSpec, schedule: ModeSchedule) -> Self {
        let (a6, b6, c6) = flow_jacobians();
        let a = DMatrix::from_fn(STATE_DIM, STATE_DIM, |i, j| a6[(i, j)]);
        let b = DMatrix::from_fn(STATE_DIM, INPUT_DIM, |i, j| b6[(i, j)]);
        let _ = c6;
        let q2 = DMatrix::from_fn(STATE_DIM, STATE_DIM, |i, j| 2.0 * cost.q[(i, j)]);
        let r2 = DMatrix::from_fn(INPUT_DIM, INPUT_DIM, |i, j| 2.0 * cost.r[(i, j)]);
        let eq_cache = Mode::ALL.map(|m| {
            let (gx, gu, g0) = mode_constraints(m);
            Arc::new(EqualityConstraint { gx, gu, g0 })
        });
        let ineq_cache = Mode::ALL.map(|m| Arc::new(mode_inequalities(m)));
        Self { cost, schedule, a, b, q2, r2, eq_cache, ineq_cache }
    }

    pub fn mode_at(&self, t: f64) -> Mode {
        self.schedule.mode_at(t)
    }
}

impl OcProblem for WalkerOcp {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    fn flow(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        let inv_m = 1.0 / crate::model::MASS;
        let mut f = DVector::zeros(STATE_DIM);
        f[0] = x[2];
        f[1] = x[3];
        f[2] = (u[0] + u[2]) * inv_m;
        f[3] = (u[1] + u[3]) * inv_m + crate::model::GRAVITY;
        f[4] = u[4];
        f[5] = u[5];
        f
    }

    fn flow_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _t: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64 {
        let xd = self.cost.desired.at(t).to_vector();
        let e = DVector::from_fn(STATE_DIM, |i, _| x[i] - xd[i]);
        let mut value = 0.0;
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                value += e[i] * self.cost.q[(i, j)] * e[j] + u[i] * self.cost.r[(i, j)] * u[j];
            }
        }
        value
    }

    fn stage_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> CostExpansion {
        let xd = self.cost.desired.at(t).to_vector();
        let e = DVector::from_fn(STATE_DIM, |i, _| x[i] - xd[i]);
        let dx = &self.q2 * &e;
        let du = &self.r2 * u;
        let value = 0.5 * (dx.dot(&e) + du.dot(u));
        CostExpansion {
            value,
            dx,
            du,
            dxx: self.q2.clone(),
            duu: self.r2.clone(),
            dux: DMatrix::zeros(INPUT_DIM, STATE_DIM),
        }
    }

    fn terminal_cost(&self, x: &DVector<f64>, t: f64) -> f64 {
        let xd = self.cost.desired.at(t).to_vector();
        let e = DVector::from_fn(STATE_DIM, |i, _| x[i] - xd[i]);
        let qf = DMatrix::from_fn(STATE_DIM, STATE_DIM, |i, j| self.cost.qf[(i, j)]);
        (e.transpose() * qf * &e)[0]
    }

    fn terminal_expansion(&self, x: &DVector<f64>, t: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let xd = self.cost.desired.at(t).to_vector();
        let e = DVector::from_fn(STATE_DIM, |i, _| x[i] - xd[i]);
        let qf = DMatrix::from_fn(STATE_DIM, STATE_DIM, |i, j| self.cost.qf[(i, j)]);
        let value = (e.transpose() * &qf * &e)[0];
        (value, 2.0 * &qf * &e, 2.0 * qf)
    }

    fn equality(&self, t: f64) -> Arc<EqualityConstraint> {
        self.eq_cache[self.schedule.mode_at(t).index()].clone()
    }

    fn inequalities(&self, t: f64) -> Arc<Vec<InequalityRow>> {
        self.ineq_cache[self.schedule.mode_at(t).index()].clone()
    }

    /// Gravity-compensating forces split over the contact feet; keeps the
    /// cold-start nominal inside the barrier's log region.
    fn initial_input(&self, _x: &DVector<f64>, t: f64) -> DVector<f64> {
        let flags = self.schedule.mode_at(t).contact_flags();
        let contacts = flags.iter().filter(|c| **c).count() as f64;
        let mut u = DVector::zeros(INPUT_DIM);
        for (i, c) in flags.iter().enumerate() {
            if *c {
                u[2 * i + 1] = crate::model::MASS * (-crate::model::GRAVITY) / contacts;
            }
        }
        u
    }
}

/// Scalar LQR reference instance: x' = u, l = q x^2 + r u^2, phi = qf x^2,
/// no constraints. Its algebraic Riccati solution is known in closed form,
/// which makes it the oracle for solver correctness checks.
#[derive(Clone, Copy, Debug)]
pub struct ScalarLqr {
    pub q: f64,
    pub r: f64,
    pub qf: f64,
}

impl ScalarLqr {
    /// Steady-state value Hessian S = 2 sqrt(q r) (value model V = S x^2 / 2).
    pub fn steady_value_hessian(&self) -> f64 {
        2.0 * (self.q * self.r).sqrt()
    }

    /// Steady-state feedback gain K = -sqrt(q / r).
    pub fn steady_gain(&self) -> f64 {
        -(self.q / self.r).sqrt()
    }
}

impl OcProblem for ScalarLqr {
    fn state_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn flow(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::from_element(1, u[0])
    }

    fn flow_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _t: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0))
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> f64 {
        self.q * x[0] * x[0] + self.r * u[0] * u[0]
    }

    fn stage_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> CostExpansion {
        CostExpansion {
            value: self.q * x[0] * x[0] + self.r * u[0] * u[0],
            dx: DVector::from_element(1, 2.0 * self.q * x[0]),
            du: DVector::from_element(1, 2.0 * self.r * u[0]),
            dxx: DMatrix::from_element(1, 1, 2.0 * self.q),
            duu: DMatrix::from_element(1, 1, 2.0 * self.r),
            dux: DMatrix::zeros(1, 1),
        }
    }

    fn terminal_cost(&self, x: &DVector<f64>, _t: f64) -> f64 {
        self.qf * x[0] * x[0]
    }

    fn terminal_expansion(&self, x: &DVector<f64>, _t: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        (
            self.qf * x[0] * x[0],
            DVector::from_element(1, 2.0 * self.qf * x[0]),
            DMatrix::from_element(1, 1, 2.0 * self.qf),
        )
    }

    fn equality(&self, _t: f64) -> Arc<EqualityConstraint> {
        Arc::new(EqualityConstraint::empty(1, 1))
    }

    fn inequalities(&self, _t: f64) -> Arc<Vec<InequalityRow>> {
        Arc::new(Vec::new())
    }
}
