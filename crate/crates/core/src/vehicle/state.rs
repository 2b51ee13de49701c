use nalgebra::{DVector, SVector};

pub const PLANT_DIM: usize = 11;
pub const PREDICTION_DIM: usize = 9;
pub const INPUT_DIM: usize = 2;

/// State of the four-wheel simulation plant.
///
/// Heading is stored unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub px: f64,
    pub py: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub w_fl: f64,
    pub w_fr: f64,
    pub w_rl: f64,
    pub w_rr: f64,
    /// Commanded average steering angle.
    pub steer: f64,
}

impl PlantState {
    pub fn to_vector(&self) -> SVector<f64, PLANT_DIM> {
        SVector::from([
            self.px,
            self.py,
            self.heading,
            self.vx,
            self.vy,
            self.yaw_rate,
            self.w_fl,
            self.w_fr,
            self.w_rl,
            self.w_rr,
            self.steer,
        ])
    }

    pub fn from_vector(v: &SVector<f64, PLANT_DIM>) -> Self {
        Self {
            px: v[0],
            py: v[1],
            heading: v[2],
            vx: v[3],
            vy: v[4],
            yaw_rate: v[5],
            w_fl: v[6],
            w_fr: v[7],
            w_rl: v[8],
            w_rr: v[9],
            steer: v[10],
        }
    }

    /// Rolling-without-slip state travelling straight at `speed` along `heading`.
    pub fn rolling(px: f64, py: f64, heading: f64, speed: f64, wheel_radius: f64) -> Self {
        let w = speed / wheel_radius;
        Self {
            px,
            py,
            heading,
            vx: speed,
            w_fl: w,
            w_fr: w,
            w_rl: w,
            w_rr: w,
            ..Self::default()
        }
    }

    /// Bicycle-model view of this state: wheel speeds averaged per axle.
    pub fn to_prediction(&self) -> PredictionState {
        PredictionState {
            px: self.px,
            py: self.py,
            heading: self.heading,
            vx: self.vx,
            vy: self.vy,
            yaw_rate: self.yaw_rate,
            w_front: 0.5 * (self.w_fl + self.w_fr),
            w_rear: 0.5 * (self.w_rl + self.w_rr),
            steer: self.steer,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// State of the bicycle prediction model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictionState {
    pub px: f64,
    pub py: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub w_front: f64,
    pub w_rear: f64,
    pub steer: f64,
}

impl PredictionState {
    pub const PX: usize = 0;
    pub const PY: usize = 1;
    pub const HEADING: usize = 2;
    pub const VX: usize = 3;
    pub const VY: usize = 4;
    pub const YAW_RATE: usize = 5;
    pub const W_FRONT: usize = 6;
    pub const W_REAR: usize = 7;
    pub const STEER: usize = 8;

    pub fn to_vector(&self) -> SVector<f64, PREDICTION_DIM> {
        SVector::from([
            self.px,
            self.py,
            self.heading,
            self.vx,
            self.vy,
            self.yaw_rate,
            self.w_front,
            self.w_rear,
            self.steer,
        ])
    }

    pub fn from_vector(v: &SVector<f64, PREDICTION_DIM>) -> Self {
        Self {
            px: v[0],
            py: v[1],
            heading: v[2],
            vx: v[3],
            vy: v[4],
            yaw_rate: v[5],
            w_front: v[6],
            w_rear: v[7],
            steer: v[8],
        }
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.to_vector().as_slice())
    }

    /// Panics if `v` does not have exactly nine entries.
    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), PREDICTION_DIM, "prediction state has 9 components");
        Self::from_vector(&SVector::from_column_slice(v))
    }
}

/// Wheel torque and steering-rate command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Torque applied to each rear wheel (N·m).
    pub torque: f64,
    /// Rate of change of the commanded steering angle (rad/s).
    pub steer_rate: f64,
}

impl ControlInput {
    pub fn new(torque: f64, steer_rate: f64) -> Self {
        Self { torque, steer_rate }
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.torque, self.steer_rate])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), INPUT_DIM, "control input has 2 components");
        Self::new(v[0], v[1])
    }
}

/// Absolute wind speed and its direction in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindCondition {
    pub speed: f64,
    pub direction: f64,
}

impl WindCondition {
    pub fn calm() -> Self {
        Self::default()
    }
}
