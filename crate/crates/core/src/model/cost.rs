//! Quadratic tracking cost l = (x - x_d)' Q (x - x_d) + u' R u with final
//! cost phi = (x - x_d)' Qf (x - x_d), plus the reference trajectories it
//! tracks.

use nalgebra::{Matrix6, Vector2, Vector6};

use crate::model::walker::{WalkerState, DEFAULT_HEIGHT};
use crate::model::ModelError;

/// Desired state trajectory t -> x_d(t).
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceTrajectory {
    /// Constant-height base translating at a fixed forward velocity; feet
    /// track the base with fixed x-offsets.
    ConstantVelocity {
        start_x: f64,
        height: f64,
        velocity: f64,
        foot_offsets: [f64; 2],
    },
    /// Fixed state.
    Hold(Box<WalkerState>),
}

impl ReferenceTrajectory {
    pub fn forward(velocity: f64) -> Self {
        ReferenceTrajectory::ConstantVelocity {
            start_x: 0.0,
            height: DEFAULT_HEIGHT,
            velocity,
            foot_offsets: DEFAULT_FOOT_OFFSETS,
        }
    }

    pub fn at(&self, t: f64) -> WalkerState {
        match self {
            ReferenceTrajectory::ConstantVelocity { start_x, height, velocity, foot_offsets } => {
                let x = start_x + velocity * t;
                WalkerState {
                    base_pos: Vector2::new(x, *height),
                    base_vel: Vector2::new(*velocity, 0.0),
                    foot_pos: Vector2::new(x + foot_offsets[0], x + foot_offsets[1]),
                }
            }
            ReferenceTrajectory::Hold(x) => **x,
        }
    }
}

/// Default foot x-offsets relative to the base, meters.
pub const DEFAULT_FOOT_OFFSETS: [f64; 2] = [-0.15, 0.15];

/// Default state weights: track height and base velocity firmly, feet
/// lightly. The overall cost magnitude sets the units of the Hamiltonian
/// and therefore the effective temperature of the posterior at the shipped
/// inverse temperature beta = 1; these values put early per-expert
/// Hamiltonian spreads at O(1).
pub const DEFAULT_Q_DIAG: [f64; 6] = [0.4, 16.0, 0.4, 1.6, 0.08, 0.08];
/// Default input weights: forces are cheap, foot velocity moderate.
pub const DEFAULT_R_DIAG: [f64; 6] = [8e-6, 8e-6, 8e-6, 8e-6, 8e-3, 8e-3];
/// Default final state weights, sized near the steady-state cost-to-go of
/// the per-axis Riccati solutions so the terminal transient stays mild.
pub const DEFAULT_QF_DIAG: [f64; 6] = [0.4, 5.2, 0.016, 0.028, 0.024, 0.024];

/// Quadratic tracking cost. Q and Qf must be symmetric PSD, R symmetric PD;
/// checked by eigenvalue sign at construction.
#[derive(Clone, Debug)]
pub struct CostSpec {
    pub q: Matrix6<f64>,
    pub r: Matrix6<f64>,
    pub qf: Matrix6<f64>,
    pub desired: ReferenceTrajectory,
}

impl CostSpec {
    pub fn new(
        q: Matrix6<f64>,
        r: Matrix6<f64>,
        qf: Matrix6<f64>,
        desired: ReferenceTrajectory,
    ) -> Result<Self, ModelError> {
        check_symmetric_psd("Q", &q, false)?;
        check_symmetric_psd("R", &r, true)?;
        check_symmetric_psd("Qf", &qf, false)?;
        Ok(Self { q, r, qf, desired })
    }

    pub fn with_default_weights(desired: ReferenceTrajectory) -> Self {
        Self::from_diagonals(DEFAULT_Q_DIAG, DEFAULT_R_DIAG, DEFAULT_QF_DIAG, desired)
            .expect("default weights are valid")
    }

    pub fn from_diagonals(
        q: [f64; 6],
        r: [f64; 6],
        qf: [f64; 6],
        desired: ReferenceTrajectory,
    ) -> Result<Self, ModelError> {
        Self::new(
            Matrix6::from_diagonal(&Vector6::from_row_slice(&q)),
            Matrix6::from_diagonal(&Vector6::from_row_slice(&r)),
            Matrix6::from_diagonal(&Vector6::from_row_slice(&qf)),
            desired,
        )
    }

    /// Intermediate cost l(x, u, t).
    pub fn stage(&self, x: &Vector6<f64>, u: &Vector6<f64>, t: f64) -> f64 {
        let e = x - self.desired.at(t).to_vector();
        (e.transpose() * self.q * e + u.transpose() * self.r * u)[0]
    }

    /// Intermediate cost from a precomputed tracking error.
    pub fn stage_from_error(&self, err: &Vector6<f64>, u: &Vector6<f64>) -> f64 {
        (err.transpose() * self.q * err + u.transpose() * self.r * u)[0]
    }

    /// Final cost phi(x).
    pub fn terminal(&self, x: &Vector6<f64>, t: f64) -> f64 {
        let e = x - self.desired.at(t).to_vector();
        (e.transpose() * self.qf * e)[0]
    }
}

/// Cost weights plus reference geometry; training jobs instantiate a
/// `CostSpec` per sampled command velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTemplate {
    pub q_diag: [f64; 6],
    pub r_diag: [f64; 6],
    pub qf_diag: [f64; 6],
    pub height: f64,
    pub foot_offsets: [f64; 2],
}

impl Default for CostTemplate {
    fn default() -> Self {
        Self {
            q_diag: DEFAULT_Q_DIAG,
            r_diag: DEFAULT_R_DIAG,
            qf_diag: DEFAULT_QF_DIAG,
            height: DEFAULT_HEIGHT,
            foot_offsets: DEFAULT_FOOT_OFFSETS,
        }
    }
}

impl CostTemplate {
    pub fn cost_for(&self, command_velocity: f64) -> Result<CostSpec, ModelError> {
        CostSpec::from_diagonals(
            self.q_diag,
            self.r_diag,
            self.qf_diag,
            ReferenceTrajectory::ConstantVelocity {
                start_x: 0.0,
                height: self.height,
                velocity: command_velocity,
                foot_offsets: self.foot_offsets,
            },
        )
    }
}

fn check_symmetric_psd(
    name: &'static str,
    m: &Matrix6<f64>,
    strictly_positive: bool,
) -> Result<(), ModelError> {
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-9 {
        return Err(ModelError::InvalidWeight { name, reason: "not symmetric".into() });
    }
    let eigs = m.symmetric_eigenvalues();
    let min = eigs.min();
    if strictly_positive && min <= 0.0 {
        return Err(ModelError::InvalidWeight {
            name,
            reason: format!("not positive definite (min eigenvalue {min:e})"),
        });
    }
    if !strictly_positive && min < -1e-10 {
        return Err(ModelError::InvalidWeight {
            name,
            reason: format!("not positive semidefinite (min eigenvalue {min:e})"),
        });
    }
    Ok(())
}
