//! Stage constraints `G(x, u) ≤ 0` on the bicycle prediction and their
//! linearization.
//!
//! Row layout per stage (per-axle friction circles):
//!
//! | row | constraint                         |
//! |-----|------------------------------------|
//! | 0   | front axle friction circle         |
//! | 1   | rear axle friction circle          |
//! | 2,3 | `±u_τ − τ_max`                     |
//! | 4,5 | `±u_δ − u_δ,max`                   |
//! | 6,7 | `±δ_c − δ_max`                     |
//!
//! With a single whole-vehicle circle the friction block is one row.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::discretize::ModelError;
use crate::vehicle::{
    bicycle_force_gradients, bicycle_forces, ControlInput, PredictionState, VehicleError,
    VehicleParams, INPUT_DIM, PREDICTION_DIM,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintLimits {
    /// Wheel torque bound (N·m).
    pub torque_max: f64,
    /// Steering-rate bound (rad/s).
    pub steer_rate_max: f64,
    /// Steering-angle bound (rad).
    pub steer_max: f64,
    /// `(μ m g)²` in N².
    pub friction_budget_sq: f64,
}

impl ConstraintLimits {
    pub fn for_vehicle(params: &VehicleParams) -> Self {
        let budget = params.friction * params.mass * params.gravity;
        Self {
            torque_max: 300.0,
            steer_rate_max: 1.5,
            steer_max: 45f64.to_radians(),
            friction_budget_sq: budget * budget,
        }
    }

    pub fn invalid_fields(&self) -> Vec<(&'static str, f64)> {
        [
            ("torque_max", self.torque_max),
            ("steer_rate_max", self.steer_rate_max),
            ("steer_max", self.steer_max),
            ("friction_budget_sq", self.friction_budget_sq),
        ]
        .into_iter()
        .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
        .collect()
    }

    /// Clamp an input into the box.
    pub fn clip(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            torque: u.torque.clamp(-self.torque_max, self.torque_max),
            steer_rate: u.steer_rate.clamp(-self.steer_rate_max, self.steer_rate_max),
        }
    }

    /// Largest amount by which `u` leaves the box (0 when inside).
    pub fn box_violation(&self, u: &ControlInput) -> f64 {
        (u.torque.abs() - self.torque_max)
            .max(u.steer_rate.abs() - self.steer_rate_max)
            .max(0.0)
    }
}

impl Default for ConstraintLimits {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrictionCircle {
    /// One circle per axle with budget proportional to the static axle load.
    #[default]
    PerAxle,
    /// A single circle on the summed axle forces against `(μ m g)²`.
    WholeVehicle,
}

impl FrictionCircle {
    pub fn rows(self) -> usize {
        match self {
            Self::PerAxle => 2,
            Self::WholeVehicle => 1,
        }
    }
}

/// `G(x,u) ≈ G_g + D δx + E δu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintLinearization {
    pub g: DVector<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

impl ConstraintLinearization {
    pub fn empty(n: usize, m: usize) -> Self {
        Self {
            g: DVector::zeros(0),
            d: DMatrix::zeros(0, n),
            e: DMatrix::zeros(0, m),
        }
    }

    pub fn rows(&self) -> usize {
        self.g.len()
    }
}

/// Stage constraint provider used by the controller.
pub trait StageConstraints: Sync {
    /// Rows per stage.
    fn count(&self) -> usize;

    fn linearize(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<ConstraintLinearization, ModelError>;

    /// Rows (within a stage) that encode tire friction limits.
    fn friction_rows(&self) -> Range<usize> {
        0..0
    }
}

/// A problem with no inequality constraints.
#[derive(Debug, Clone, Copy)]
pub struct Unconstrained {
    pub state_dim: usize,
    pub input_dim: usize,
}

impl StageConstraints for Unconstrained {
    fn count(&self) -> usize {
        0
    }

    fn linearize(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Result<ConstraintLinearization, ModelError> {
        Ok(ConstraintLinearization::empty(self.state_dim, self.input_dim))
    }
}

/// Friction circles plus input and steering-angle boxes for the bicycle model.
///
/// The QP receives the friction rows divided by the friction budget, so
/// they read as fractions of `(μ m g)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleConstraints {
    pub params: VehicleParams,
    pub limits: ConstraintLimits,
    pub friction: FrictionCircle,
}

impl VehicleConstraints {
    pub fn new(params: VehicleParams, limits: ConstraintLimits) -> Self {
        Self {
            params,
            limits,
            friction: FrictionCircle::PerAxle,
        }
    }
}

fn box_rows(
    g: &mut DVector<f64>,
    start: usize,
    x: &PredictionState,
    u: &ControlInput,
    limits: &ConstraintLimits,
) {
    g[start] = u.torque - limits.torque_max;
    g[start + 1] = -u.torque - limits.torque_max;
    g[start + 2] = u.steer_rate - limits.steer_rate_max;
    g[start + 3] = -u.steer_rate - limits.steer_rate_max;
    g[start + 4] = x.steer - limits.steer_max;
    g[start + 5] = -x.steer - limits.steer_max;
}

/// Stacked constraint vector; non-positive entries are satisfied.
pub fn evaluate_constraints(
    x: &PredictionState,
    u: &ControlInput,
    params: &VehicleParams,
    limits: &ConstraintLimits,
    friction: FrictionCircle,
) -> Result<DVector<f64>, VehicleError> {
    let forces = bicycle_forces(x, params)?;
    let (f, r) = (forces.front, forces.rear);
    let k = friction.rows();
    let mut g = DVector::zeros(k + 6);
    match friction {
        FrictionCircle::PerAxle => {
            let front_budget = limits.friction_budget_sq * params.front_load_share().powi(2);
            let rear_budget = limits.friction_budget_sq * params.rear_load_share().powi(2);
            g[0] = 4.0 * (f.longitudinal.powi(2) + f.lateral.powi(2)) - front_budget;
            g[1] = 4.0 * (r.longitudinal.powi(2) + r.lateral.powi(2)) - rear_budget;
        }
        FrictionCircle::WholeVehicle => {
            let lon = 2.0 * (f.longitudinal + r.longitudinal);
            let lat = 2.0 * (f.lateral + r.lateral);
            g[0] = lon * lon + lat * lat - limits.friction_budget_sq;
        }
    }
    box_rows(&mut g, k, x, u, limits);
    Ok(g)
}

pub fn constraint_jacobians(
    x: &PredictionState,
    u: &ControlInput,
    params: &VehicleParams,
    limits: &ConstraintLimits,
    friction: FrictionCircle,
) -> Result<ConstraintLinearization, VehicleError> {
    let g = evaluate_constraints(x, u, params, limits, friction)?;
    let forces = bicycle_forces(x, params)?;
    let (f, r) = (forces.front, forces.rear);
    let grad = bicycle_force_gradients(x, params)?;
    let k = friction.rows();
    let rows = k + 6;
    let mut d = DMatrix::zeros(rows, PREDICTION_DIM);
    let mut e = DMatrix::zeros(rows, INPUT_DIM);
    match friction {
        FrictionCircle::PerAxle => {
            let front = (grad.long_front * f.longitudinal + grad.lat_front * f.lateral) * 8.0;
            let rear = (grad.long_rear * r.longitudinal + grad.lat_rear * r.lateral) * 8.0;
            d.set_row(0, &front.transpose());
            d.set_row(1, &rear.transpose());
        }
        FrictionCircle::WholeVehicle => {
            let lon = 2.0 * (f.longitudinal + r.longitudinal);
            let lat = 2.0 * (f.lateral + r.lateral);
            let row = ((grad.long_front + grad.long_rear) * lon
                + (grad.lat_front + grad.lat_rear) * lat)
                * 4.0;
            d.set_row(0, &row.transpose());
        }
    }
    e[(k, 0)] = 1.0;
    e[(k + 1, 0)] = -1.0;
    e[(k + 2, 1)] = 1.0;
    e[(k + 3, 1)] = -1.0;
    d[(k + 4, PredictionState::STEER)] = 1.0;
    d[(k + 5, PredictionState::STEER)] = -1.0;
    Ok(ConstraintLinearization { g, d, e })
}

impl StageConstraints for VehicleConstraints {
    fn count(&self) -> usize {
        self.friction.rows() + 6
    }

    fn linearize(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<ConstraintLinearization, ModelError> {
        let state = PredictionState::from_slice(x.as_slice());
        let input = ControlInput::from_slice(u.as_slice());
        let mut lin = constraint_jacobians(&state, &input, &self.params, &self.limits, self.friction)?;
        let scale = 1.0 / self.limits.friction_budget_sq;
        for r in self.friction_rows() {
            lin.g[r] *= scale;
            lin.d.row_mut(r).scale_mut(scale);
            lin.e.row_mut(r).scale_mut(scale);
        }
        Ok(lin)
    }

    fn friction_rows(&self) -> Range<usize> {
        0..self.friction.rows()
    }
}
