//! Vehicle models: a four-wheel Dugoff-tire plant used as simulation truth
//! and a linear-tire bicycle model used for prediction.

mod dynamics;
mod params;
mod state;
mod tire;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use dynamics::{
    plant_derivative, prediction_derivative, prediction_jacobians, KinematicsConvention,
    PlantOptions, SteeringGeometry, TireModel,
};
pub(crate) use dynamics::{bicycle_force_gradients, bicycle_forces};
pub use params::VehicleParams;
pub use state::{ControlInput, PlantState, PredictionState, WindCondition, INPUT_DIM, PLANT_DIM, PREDICTION_DIM};
pub use tire::{
    ackermann_angles, slip_angle, slip_quantities, slip_ratio, tire_forces_dugoff,
    tire_forces_linear, Axle, BodyMotion, SlipQuantities, TireForces, WheelAngles,
    DEFAULT_FRICTION_REDUCTION, MIN_LONGITUDINAL_SPEED,
};

use crate::discretize::{Model, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("longitudinal speed {vx} m/s is below the slip singularity guard")]
    BelowMinimumSpeed { vx: f64 },
    #[error("turn radius {radius} m lies inside the track")]
    TurnInsideTrack { radius: f64 },
    #[error("steering angle {steer} rad is outside (-pi/2, pi/2)")]
    SteeringOutOfRange { steer: f64 },
    #[error("parameter `{name}` has invalid value {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

impl From<VehicleError> for ModelError {
    fn from(e: VehicleError) -> Self {
        ModelError::Domain(e.to_string())
    }
}

/// The bicycle prediction model behind the generic [`Model`] interface.
///
/// The wind estimate defaults to calm: the controller does not observe the
/// disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BicycleModel {
    pub params: VehicleParams,
    pub wind: WindCondition,
    pub convention: KinematicsConvention,
}

impl BicycleModel {
    pub fn new(params: VehicleParams) -> Self {
        Self {
            params,
            ..Self::default()
        }
    }
}

impl Model for BicycleModel {
    fn state_dim(&self) -> usize {
        PREDICTION_DIM
    }

    fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let state = PredictionState::from_slice(x.as_slice());
        let input = ControlInput::from_slice(u.as_slice());
        let d = prediction_derivative(&state, &input, &self.wind, &self.params, self.convention)?;
        Ok(d.to_dvector())
    }

    fn analytic_jacobians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<Result<(DMatrix<f64>, DMatrix<f64>), ModelError>> {
        let state = PredictionState::from_slice(x.as_slice());
        Some(
            prediction_jacobians(&state, &self.wind, &self.params, self.convention)
                .map(|(fx, fu)| {
                    (
                        DMatrix::from_column_slice(PREDICTION_DIM, PREDICTION_DIM, fx.as_slice()),
                        DMatrix::from_column_slice(PREDICTION_DIM, INPUT_DIM, fu.as_slice()),
                    )
                })
                .map_err(ModelError::from),
        )
    }
}

/// The four-wheel plant with its tire and steering options.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Plant {
    pub params: VehicleParams,
    pub options: PlantOptions,
}

impl Plant {
    pub fn derivative(
        &self,
        state: &PlantState,
        input: &ControlInput,
        wind: &WindCondition,
    ) -> Result<PlantState, VehicleError> {
        plant_derivative(state, input, wind, &self.params, &self.options)
    }
}
