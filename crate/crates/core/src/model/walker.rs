//! Planar point-foot walker: a 2D point-mass base with two massless,
//! ground-constrained feet.
//!
//! State (6): base position (x, z), base velocity (vx, vz), foot x-positions
//! (f1, f2). Input (6): contact forces per foot (F1x, F1z, F2x, F2z) and
//! commanded foot x-velocities (v1, v2). Contact switches make the system
//! hybrid: a swing foot must carry zero force, a stance foot zero velocity.

use nalgebra::{DMatrix, DVector, Matrix6, Vector2, Vector6};

use crate::model::ModelError;

/// Base mass in kilograms.
pub const MASS: f64 = 10.0;
/// Gravitational acceleration (z points up), m/s^2.
pub const GRAVITY: f64 = -9.81;
/// Nominal standing height of the base, meters.
pub const DEFAULT_HEIGHT: f64 = 0.5;
/// A rollout fails once the base height deviates more than this, meters.
pub const FAILURE_HEIGHT_DEVIATION: f64 = 0.2;

pub const STATE_DIM: usize = 6;
pub const INPUT_DIM: usize = 6;

/// State of the walker. All entries are finite by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkerState {
    /// Base position (x, z) in meters.
    pub base_pos: Vector2<f64>,
    /// Base velocity (vx, vz) in m/s.
    pub base_vel: Vector2<f64>,
    /// Foot x-coordinates (foot 1, foot 2) in meters.
    pub foot_pos: Vector2<f64>,
}

impl WalkerState {
    pub fn new(
        base_pos: Vector2<f64>,
        base_vel: Vector2<f64>,
        foot_pos: Vector2<f64>,
    ) -> Result<Self, ModelError> {
        let s = Self { base_pos, base_vel, foot_pos };
        s.check_finite()?;
        Ok(s)
    }

    pub fn zeros() -> Self {
        Self {
            base_pos: Vector2::zeros(),
            base_vel: Vector2::zeros(),
            foot_pos: Vector2::zeros(),
        }
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        if self.to_vector().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::NonFinite("walker state"))
        }
    }

    /// Packs as [x, z, vx, vz, f1, f2].
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.base_pos.x,
            self.base_pos.y,
            self.base_vel.x,
            self.base_vel.y,
            self.foot_pos.x,
            self.foot_pos.y,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            base_pos: Vector2::new(v[0], v[1]),
            base_vel: Vector2::new(v[2], v[3]),
            foot_pos: Vector2::new(v[4], v[5]),
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, ModelError> {
        if v.len() != STATE_DIM {
            return Err(ModelError::Dimension { expected: STATE_DIM, found: v.len() });
        }
        Ok(Self::from_vector(&Vector6::from_row_slice(v)))
    }
}

/// Control input of the walker. All entries are finite by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkerInput {
    /// Contact force of foot 1, (Fx, Fz) in newtons.
    pub foot1_force: Vector2<f64>,
    /// Contact force of foot 2, (Fx, Fz) in newtons.
    pub foot2_force: Vector2<f64>,
    /// Commanded foot x-velocities (foot 1, foot 2) in m/s.
    pub foot_vel: Vector2<f64>,
}

impl WalkerInput {
    pub fn zeros() -> Self {
        Self {
            foot1_force: Vector2::zeros(),
            foot2_force: Vector2::zeros(),
            foot_vel: Vector2::zeros(),
        }
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        if self.to_vector().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::NonFinite("walker input"))
        }
    }

    /// Packs as [F1x, F1z, F2x, F2z, v1, v2].
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.foot1_force.x,
            self.foot1_force.y,
            self.foot2_force.x,
            self.foot2_force.y,
            self.foot_vel.x,
            self.foot_vel.y,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            foot1_force: Vector2::new(v[0], v[1]),
            foot2_force: Vector2::new(v[2], v[3]),
            foot_vel: Vector2::new(v[4], v[5]),
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, ModelError> {
        if v.len() != INPUT_DIM {
            return Err(ModelError::Dimension { expected: INPUT_DIM, found: v.len() });
        }
        Ok(Self::from_vector(&Vector6::from_row_slice(v)))
    }
}

/// Contact mode. Exactly three modes are admissible; flight is rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Both feet in contact.
    Stance,
    /// Foot 1 swings, foot 2 in contact.
    Swing1,
    /// Foot 2 swings, foot 1 in contact.
    Swing2,
}

/// Number of admissible modes.
pub const NUM_MODES: usize = 3;

impl Mode {
    pub const ALL: [Mode; NUM_MODES] = [Mode::Stance, Mode::Swing1, Mode::Swing2];

    pub fn contact_flags(&self) -> [bool; 2] {
        match self {
            Mode::Stance => [true, true],
            Mode::Swing1 => [false, true],
            Mode::Swing2 => [true, false],
        }
    }

    pub fn from_flags(flags: [bool; 2]) -> Result<Self, ModelError> {
        match flags {
            [true, true] => Ok(Mode::Stance),
            [false, true] => Ok(Mode::Swing1),
            [true, false] => Ok(Mode::Swing2),
            [false, false] => Err(ModelError::FlightMode),
        }
    }

    /// Index into probability vectors: stance 0, swing1 1, swing2 2.
    pub fn index(&self) -> usize {
        match self {
            Mode::Stance => 0,
            Mode::Swing1 => 1,
            Mode::Swing2 => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self, ModelError> {
        Mode::ALL.get(i).copied().ok_or(ModelError::UnknownMode(i.to_string()))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Stance => "stance",
            Mode::Swing1 => "swing1",
            Mode::Swing2 => "swing2",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "stance" => Ok(Mode::Stance),
            "swing1" => Ok(Mode::Swing1),
            "swing2" => Ok(Mode::Swing2),
            other => Err(ModelError::UnknownMode(other.to_string())),
        }
    }
}

/// State-tracking error in the body-aligned frame. The planar point mass has
/// no base orientation, so the frame transform is the identity and the values
/// are simply x - x_d.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeState {
    pub values: Vector6<f64>,
}

/// Continuous flow map f(x, u): [vx, vz, (F1+F2)/m + g, v1, v2].
pub fn flow_map(x: &WalkerState, u: &WalkerInput) -> Result<Vector6<f64>, ModelError> {
    x.check_finite()?;
    u.check_finite()?;
    let accel = (u.foot1_force + u.foot2_force) / MASS + Vector2::new(0.0, GRAVITY);
    Ok(Vector6::new(
        x.base_vel.x,
        x.base_vel.y,
        accel.x,
        accel.y,
        u.foot_vel.x,
        u.foot_vel.y,
    ))
}

/// Constant Jacobians of the flow map: A = df/dx, B = df/du, and the drift
/// c so that f(x, u) = A x + B u + c.
pub fn flow_jacobians() -> (Matrix6<f64>, Matrix6<f64>, Vector6<f64>) {
    let mut a = Matrix6::zeros();
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    let mut b = Matrix6::zeros();
    b[(2, 0)] = 1.0 / MASS;
    b[(3, 1)] = 1.0 / MASS;
    b[(2, 2)] = 1.0 / MASS;
    b[(3, 3)] = 1.0 / MASS;
    b[(4, 4)] = 1.0;
    b[(5, 5)] = 1.0;
    let mut c = Vector6::zeros();
    c[3] = GRAVITY;
    (a, b, c)
}

/// Mode-dependent equality constraints g(x, u) = G_x x + G_u u + g0 = 0.
///
/// A swing foot contributes two rows (both force components zero), a contact
/// foot one row (commanded foot velocity zero). Row order: swing-force rows
/// first, then stance-velocity rows, foot 1 before foot 2 within each group.
pub fn mode_constraints(mode: Mode) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let flags = mode.contact_flags();
    let mut rows: Vec<[f64; INPUT_DIM]> = Vec::new();
    for (i, contact) in flags.iter().enumerate() {
        if !contact {
            let mut fx = [0.0; INPUT_DIM];
            fx[2 * i] = 1.0;
            let mut fz = [0.0; INPUT_DIM];
            fz[2 * i + 1] = 1.0;
            rows.push(fx);
            rows.push(fz);
        }
    }
    for (i, contact) in flags.iter().enumerate() {
        if *contact {
            let mut vel = [0.0; INPUT_DIM];
            vel[4 + i] = 1.0;
            rows.push(vel);
        }
    }
    let n = rows.len();
    let gx = DMatrix::zeros(n, STATE_DIM);
    let mut gu = DMatrix::zeros(n, INPUT_DIM);
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            gu[(r, c)] = *v;
        }
    }
    let g0 = DVector::zeros(n);
    (gx, gu, g0)
}

/// One affine inequality row h(x, u) = hx.x + hu.u + h0 >= 0.
#[derive(Clone, Debug)]
pub struct InequalityRow {
    pub hx: DVector<f64>,
    pub hu: DVector<f64>,
    pub h0: f64,
}

impl InequalityRow {
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.hx.dot(x) + self.hu.dot(u) + self.h0
    }
}

/// Unilateral contact: each contact foot i contributes F_{i,z} >= 0.
pub fn mode_inequalities(mode: Mode) -> Vec<InequalityRow> {
    let mut rows = Vec::new();
    for (i, contact) in mode.contact_flags().iter().enumerate() {
        if *contact {
            let mut hu = DVector::zeros(INPUT_DIM);
            hu[2 * i + 1] = 1.0;
            rows.push(InequalityRow { hx: DVector::zeros(STATE_DIM), hu, h0: 0.0 });
        }
    }
    rows
}

/// Tracking error x - x_d. The transform slot is the identity for this
/// planar model.
pub fn relative_state(x: &WalkerState, x_d: &WalkerState) -> RelativeState {
    RelativeState { values: x.to_vector() - x_d.to_vector() }
}

/// Semi-implicit Euler step: velocities first, then positions with the new
/// velocity. Contact feet have their commanded velocity projected to zero
/// before integration, so stance feet cannot be dragged.
pub fn step(
    x: &WalkerState,
    u: &WalkerInput,
    mode: Mode,
    dt: f64,
) -> Result<WalkerState, ModelError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::InvalidTimeStep(dt));
    }
    x.check_finite()?;
    u.check_finite()?;
    let accel = (u.foot1_force + u.foot2_force) / MASS + Vector2::new(0.0, GRAVITY);
    let base_vel = x.base_vel + dt * accel;
    let base_pos = x.base_pos + dt * base_vel;
    let flags = mode.contact_flags();
    let mut foot_pos = x.foot_pos;
    for i in 0..2 {
        if !flags[i] {
            foot_pos[i] += dt * u.foot_vel[i];
        }
    }
    Ok(WalkerState { base_pos, base_vel, foot_pos })
}

/// Height-only failure criterion: the base deviates more than 20 cm from the
/// reference height.
pub fn failure_check(x: &WalkerState, x_ref: &WalkerState) -> bool {
    (x.base_pos.y - x_ref.base_pos.y).abs() > FAILURE_HEIGHT_DEVIATION
}
