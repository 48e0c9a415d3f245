//! The solver's output: nominal trajectories, time-varying feedback gains,
//! a local quadratic value model per knot, and the recovered Lagrange
//! multipliers.

use nalgebra::{DMatrix, DVector};

use crate::model::{WalkerInput, WalkerState};
use crate::solver::SolverError;

/// Quadratic value model about the nominal state at one knot:
/// V(x) = v + dvdx . (x - x_nom) + 0.5 (x - x_nom)' dvdxx (x - x_nom).
#[derive(Clone, Debug)]
pub struct ValueQuad {
    pub v: f64,
    pub dvdx: DVector<f64>,
    pub dvdxx: DMatrix<f64>,
}

impl ValueQuad {
    /// Evaluates the model at an arbitrary state.
    pub fn eval(&self, x: &DVector<f64>, x_nom: &DVector<f64>) -> f64 {
        let d = x - x_nom;
        self.v + self.dvdx.dot(&d) + 0.5 * (d.transpose() * &self.dvdxx * &d)[0]
    }

    /// Gradient of the model at an arbitrary state.
    pub fn gradient(&self, x: &DVector<f64>, x_nom: &DVector<f64>) -> DVector<f64> {
        &self.dvdx + &self.dvdxx * (x - x_nom)
    }
}

/// Solution of one receding-horizon solve over a uniform knot grid.
///
/// `times`, `x_nom`, `value`, and `dvdt` have K+1 entries; `u_nom`, `gains`,
/// and `multipliers` have K entries (one per knot with an input).
#[derive(Clone, Debug)]
pub struct SolverSolution {
    pub times: Vec<f64>,
    pub x_nom: Vec<DVector<f64>>,
    pub u_nom: Vec<DVector<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    pub value: Vec<ValueQuad>,
    pub dvdt: Vec<f64>,
    pub multipliers: Vec<DVector<f64>>,
    /// Objective value of the nominal trajectory: final cost plus the
    /// trapezoidal integral of the intermediate cost.
    pub total_cost: f64,
    /// Objective including the barrier terms (the solver's merit).
    pub augmented_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after the initial rollout and after each accepted iterate.
    pub iteration_costs: Vec<f64>,
}

impl SolverSolution {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn knots(&self) -> usize {
        self.times.len()
    }

    fn locate(&self, t: f64) -> Result<(usize, f64), SolverError> {
        let t0 = self.start_time();
        let tf = self.end_time();
        let tol = 1e-9 * self.dt().max(1.0);
        if t < t0 - tol || t > tf + tol {
            return Err(SolverError::OutsideHorizon { t, start: t0, end: tf });
        }
        let s = ((t - t0) / self.dt()).clamp(0.0, (self.times.len() - 1) as f64);
        let mut k = s.floor() as usize;
        let mut w = s - k as f64;
        // snap to the knot when within rounding distance of it
        if w < 1e-9 {
            w = 0.0;
        } else if w > 1.0 - 1e-9 {
            k += 1;
            w = 0.0;
        }
        if k >= self.times.len() - 1 {
            k = self.times.len() - 2;
            w = 1.0;
        }
        Ok((k, w))
    }

    /// Linear interpolation of the nominal state.
    pub fn state_at(&self, t: f64) -> Result<DVector<f64>, SolverError> {
        let (k, w) = self.locate(t)?;
        Ok(&self.x_nom[k] * (1.0 - w) + &self.x_nom[k + 1] * w)
    }

    /// Linear interpolation of the nominal input (held on the last interval).
    pub fn input_at(&self, t: f64) -> Result<DVector<f64>, SolverError> {
        let (k, w) = self.locate(t)?;
        if k + 1 < self.u_nom.len() {
            Ok(&self.u_nom[k] * (1.0 - w) + &self.u_nom[k + 1] * w)
        } else {
            Ok(self.u_nom[self.u_nom.len() - 1].clone())
        }
    }

    /// Linear interpolation of the feedback gain (held on the last interval).
    pub fn gain_at(&self, t: f64) -> Result<DMatrix<f64>, SolverError> {
        let (k, w) = self.locate(t)?;
        if k + 1 < self.gains.len() {
            Ok(&self.gains[k] * (1.0 - w) + &self.gains[k + 1] * w)
        } else {
            Ok(self.gains[self.gains.len() - 1].clone())
        }
    }

    /// MPC feedback policy u_nom(t) + K(t) (x - x_nom(t)).
    pub fn policy_eval(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>, SolverError> {
        let (k, w) = self.locate(t)?;
        if w == 0.0 || (w == 1.0 && k + 1 >= self.u_nom.len()) {
            // knot-aligned: no interpolation needed
            let j = if w == 0.0 { k } else { k + 1 };
            let ju = j.min(self.u_nom.len() - 1);
            let mut u = self.u_nom[ju].clone();
            u.gemv(1.0, &self.gains[ju], &(x - &self.x_nom[j]), 1.0);
            return Ok(u);
        }
        let x_ref = self.state_at(t)?;
        let u = self.input_at(t)?;
        let gain = self.gain_at(t)?;
        Ok(u + gain * (x - x_ref))
    }

    /// Quadratic value model for the interval containing t (per-knot model,
    /// not interpolated; knot chosen by rounding to the nearer knot).
    pub fn value_at(&self, t: f64) -> Result<(&ValueQuad, &DVector<f64>), SolverError> {
        let (k, w) = self.locate(t)?;
        let k = if w > 0.5 { k + 1 } else { k };
        Ok((&self.value[k], &self.x_nom[k]))
    }

    /// Interpolated time-derivative of the value function.
    pub fn dvdt_at(&self, t: f64) -> Result<f64, SolverError> {
        let (k, w) = self.locate(t)?;
        Ok(self.dvdt[k] * (1.0 - w) + self.dvdt[k + 1] * w)
    }

    /// Multipliers of the interval containing t (piecewise constant; row
    /// counts change across mode switches so no interpolation is possible).
    pub fn multiplier_at(&self, t: f64) -> Result<&DVector<f64>, SolverError> {
        let (k, _) = self.locate(t)?;
        Ok(&self.multipliers[k.min(self.multipliers.len() - 1)])
    }
}

/// MPC feedback policy for the walker, Eq-style wrapper over `policy_eval`.
pub fn mpc_policy_eval(
    sol: &SolverSolution,
    x: &WalkerState,
    t: f64,
) -> Result<WalkerInput, SolverError> {
    let xv = x.to_vector();
    let u = sol.policy_eval(&DVector::from_row_slice(xv.as_slice()), t)?;
    WalkerInput::from_slice(u.as_slice()).map_err(SolverError::Model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_solution() -> SolverSolution {
        // two intervals, scalar problem, gains -1 everywhere
        let times = vec![0.0, 0.5, 1.0];
        let x_nom = vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 0.5),
            DVector::from_element(1, 0.25),
        ];
        let u_nom = vec![DVector::from_element(1, -1.0), DVector::from_element(1, -0.5)];
        let gains = vec![DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, -1.0)];
        let value = (0..3)
            .map(|_| ValueQuad {
                v: 0.0,
                dvdx: DVector::zeros(1),
                dvdxx: DMatrix::zeros(1, 1),
            })
            .collect();
        SolverSolution {
            times,
            x_nom,
            u_nom,
            gains,
            value,
            dvdt: vec![0.0; 3],
            multipliers: vec![DVector::zeros(0), DVector::zeros(0)],
            total_cost: 0.0,
            augmented_cost: 0.0,
            converged: true,
            iterations: 1,
            iteration_costs: vec![0.0],
        }
    }

    #[test]
    fn policy_on_nominal_returns_nominal_input() {
        let sol = toy_solution();
        let u = sol.policy_eval(&DVector::from_element(1, 1.0), 0.0).unwrap();
        assert_eq!(u[0], -1.0);
        let u = sol.policy_eval(&DVector::from_element(1, 0.5), 0.5).unwrap();
        assert_eq!(u[0], -0.5);
    }

    #[test]
    fn zero_gain_ignores_deviation() {
        let mut sol = toy_solution();
        for g in &mut sol.gains {
            g.fill(0.0);
        }
        let u = sol.policy_eval(&DVector::from_element(1, 100.0), 0.25).unwrap();
        assert_eq!(u[0], -0.75); // interpolated u_nom only
    }

    #[test]
    fn unit_gain_feedback() {
        let sol = toy_solution();
        // x - x_nom = 0.1, K = -1 -> u = u_nom - 0.1
        let u = sol.policy_eval(&DVector::from_element(1, 1.1), 0.0).unwrap();
        assert!((u[0] - (-1.1)).abs() < 1e-12);
    }

    #[test]
    fn outside_horizon_is_an_error() {
        let sol = toy_solution();
        assert!(sol.policy_eval(&DVector::from_element(1, 0.0), -0.1).is_err());
        assert!(sol.policy_eval(&DVector::from_element(1, 0.0), 1.1).is_err());
        assert!(sol.policy_eval(&DVector::from_element(1, 0.0), 1.0).is_ok());
    }
}
