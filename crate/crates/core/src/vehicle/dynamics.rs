//! Continuous-time dynamics of the four-wheel plant and the bicycle
//! prediction model.

use nalgebra::{SMatrix, SVector};

use super::state::{PREDICTION_DIM, INPUT_DIM};
use super::tire::{
    ackermann_angles, check_speed, slip_quantities, tire_forces_dugoff, tire_forces_linear, Axle,
    BodyMotion, SlipQuantities, TireForces, WheelAngles,
};
use super::{ControlInput, PlantState, PredictionState, VehicleError, VehicleParams, WindCondition};

/// Sign convention of the pose kinematics and the drag law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KinematicsConvention {
    /// Planar rotation `ṗ_y = v_x sinψ + v_y cosψ` and drag opposing the
    /// relative air velocity.
    #[default]
    Standard,
    /// `ṗ_y = v_x sinψ − v_y cosψ` and an unsigned quadratic drag term, as
    /// the model equations are commonly printed.
    AsWritten,
}

impl KinematicsConvention {
    fn lateral_sign(self) -> f64 {
        match self {
            Self::Standard => 1.0,
            Self::AsWritten => -1.0,
        }
    }

    /// Drag force for a relative air speed and its derivative.
    fn drag(self, coefficient: f64, relative: f64) -> (f64, f64) {
        match self {
            Self::Standard => (
                coefficient * relative * relative.abs(),
                2.0 * coefficient * relative.abs(),
            ),
            Self::AsWritten => (coefficient * relative * relative, 2.0 * coefficient * relative),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TireModel {
    /// Dugoff saturation with an optional friction-reduction coefficient.
    Dugoff { friction_reduction: Option<f64> },
    /// `F_lon = C_s σ`, `F_lat = C_a α`.
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteeringGeometry {
    #[default]
    Ackermann,
    /// Both front wheels at the commanded angle.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantOptions {
    pub tire: TireModel,
    pub steering: SteeringGeometry,
    pub convention: KinematicsConvention,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self {
            tire: TireModel::Dugoff { friction_reduction: None },
            steering: SteeringGeometry::Ackermann,
            convention: KinematicsConvention::Standard,
        }
    }
}

/// Body-frame relative air velocity for a given heading.
fn relative_air(vx: f64, vy: f64, heading: f64, wind: &WindCondition) -> (f64, f64) {
    let rel = wind.direction - heading;
    (vx + wind.speed * rel.cos(), vy + wind.speed * rel.sin())
}

fn tire_force(
    model: TireModel,
    slip: &SlipQuantities,
    load: f64,
    vx: f64,
    params: &VehicleParams,
) -> TireForces {
    match model {
        TireModel::Dugoff { friction_reduction } => {
            tire_forces_dugoff(slip, load, vx, friction_reduction, params)
        }
        TireModel::Linear => tire_forces_linear(slip, params),
    }
}

/// Tire force rotated into the body frame by the wheel angle.
fn body_frame(f: &TireForces, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (
        f.longitudinal * c - f.lateral * s,
        f.longitudinal * s + f.lateral * c,
    )
}

/// Time derivative of the four-wheel plant state.
///
/// Rear wheels both receive the commanded torque; front wheels roll freely.
pub fn plant_derivative(
    state: &PlantState,
    input: &ControlInput,
    wind: &WindCondition,
    params: &VehicleParams,
    options: &PlantOptions,
) -> Result<PlantState, VehicleError> {
    check_speed(state.vx)?;
    let motion = BodyMotion {
        vx: state.vx,
        vy: state.vy,
        yaw_rate: state.yaw_rate,
    };
    let angles = match options.steering {
        SteeringGeometry::Ackermann => ackermann_angles(state.steer, params)?,
        SteeringGeometry::Parallel => WheelAngles {
            left: state.steer,
            right: state.steer,
        },
    };
    let front_load = params.front_wheel_load();
    let rear_load = params.rear_wheel_load();
    let force = |steer: f64, w: f64, axle: Axle, load: f64| -> Result<TireForces, VehicleError> {
        let slip = slip_quantities(&motion, steer, w, axle, params)?;
        Ok(tire_force(options.tire, &slip, load, state.vx, params))
    };
    let fl = force(angles.left, state.w_fl, Axle::Front, front_load)?;
    let fr = force(angles.right, state.w_fr, Axle::Front, front_load)?;
    let rl = force(0.0, state.w_rl, Axle::Rear, rear_load)?;
    let rr = force(0.0, state.w_rr, Axle::Rear, rear_load)?;

    let (fx_fl, fy_fl) = body_frame(&fl, angles.left);
    let (fx_fr, fy_fr) = body_frame(&fr, angles.right);
    let (fx_rl, fy_rl) = (rl.longitudinal, rl.lateral);
    let (fx_rr, fy_rr) = (rr.longitudinal, rr.lateral);

    let (rel_x, rel_y) = relative_air(state.vx, state.vy, state.heading, wind);
    let (drag_x, _) = options.convention.drag(params.drag_lon, rel_x);
    let (drag_y, _) = options.convention.drag(params.drag_lat, rel_y);

    let (sh, ch) = state.heading.sin_cos();
    let k = options.convention.lateral_sign();
    let r = params.wheel_radius;
    let j = params.wheel_inertia;

    Ok(PlantState {
        px: state.vx * ch - state.vy * sh,
        py: state.vx * sh + k * state.vy * ch,
        heading: state.yaw_rate,
        vx: state.yaw_rate * state.vy + (fx_fl + fx_fr + fx_rl + fx_rr - drag_x) / params.mass,
        vy: -state.yaw_rate * state.vx + (fy_fl + fy_fr + fy_rl + fy_rr - drag_y) / params.mass,
        yaw_rate: ((fy_fl + fy_fr) * params.front_axle - (fy_rl + fy_rr) * params.rear_axle
            + (fx_fr - fx_fl + fx_rr - fx_rl) * params.half_track)
            / params.yaw_inertia,
        w_fl: -r * fl.longitudinal / j,
        w_fr: -r * fr.longitudinal / j,
        w_rl: (input.torque - r * rl.longitudinal) / j,
        w_rr: (input.torque - r * rr.longitudinal) / j,
        steer: input.steer_rate,
    })
}

/// Per-axle slip and linear-tire forces of the bicycle model.
pub(crate) struct AxleForces {
    pub front: TireForces,
    pub rear: TireForces,
}

pub(crate) fn bicycle_forces(
    state: &PredictionState,
    params: &VehicleParams,
) -> Result<AxleForces, VehicleError> {
    let motion = BodyMotion {
        vx: state.vx,
        vy: state.vy,
        yaw_rate: state.yaw_rate,
    };
    let front = slip_quantities(&motion, state.steer, state.w_front, Axle::Front, params)?;
    let rear = slip_quantities(&motion, 0.0, state.w_rear, Axle::Rear, params)?;
    Ok(AxleForces {
        front: tire_forces_linear(&front, params),
        rear: tire_forces_linear(&rear, params),
    })
}

/// Time derivative of the bicycle prediction state (linear tires, each
/// axle force counted twice).
pub fn prediction_derivative(
    state: &PredictionState,
    input: &ControlInput,
    wind: &WindCondition,
    params: &VehicleParams,
    convention: KinematicsConvention,
) -> Result<PredictionState, VehicleError> {
    let AxleForces { front, rear } = bicycle_forces(state, params)?;
    let (sd, cd) = state.steer.sin_cos();
    let (sh, ch) = state.heading.sin_cos();
    let (rel_x, rel_y) = relative_air(state.vx, state.vy, state.heading, wind);
    let (drag_x, _) = convention.drag(params.drag_lon, rel_x);
    let (drag_y, _) = convention.drag(params.drag_lat, rel_y);
    let k = convention.lateral_sign();

    let long_front = 2.0 * (front.longitudinal * cd - front.lateral * sd);
    let lat_front = 2.0 * (front.longitudinal * sd + front.lateral * cd);
    let r = params.wheel_radius;
    let j = params.wheel_inertia;

    Ok(PredictionState {
        px: state.vx * ch - state.vy * sh,
        py: state.vx * sh + k * state.vy * ch,
        heading: state.yaw_rate,
        vx: state.yaw_rate * state.vy
            + (long_front + 2.0 * rear.longitudinal - drag_x) / params.mass,
        vy: -state.yaw_rate * state.vx + (lat_front + 2.0 * rear.lateral - drag_y) / params.mass,
        yaw_rate: (lat_front * params.front_axle - 2.0 * rear.lateral * params.rear_axle)
            / params.yaw_inertia,
        w_front: -r * front.longitudinal / j,
        w_rear: (input.torque - r * rear.longitudinal) / j,
        steer: input.steer_rate,
    })
}

pub type StateGradient = SVector<f64, PREDICTION_DIM>;

/// Gradients of the four bicycle tire forces with respect to the state.
pub(crate) struct ForceGradients {
    pub long_front: StateGradient,
    pub lat_front: StateGradient,
    pub long_rear: StateGradient,
    pub lat_rear: StateGradient,
}

pub(crate) fn bicycle_force_gradients(
    state: &PredictionState,
    params: &VehicleParams,
) -> Result<ForceGradients, VehicleError> {
    use PredictionState as S;
    check_speed(state.vx)?;
    let vx = state.vx;
    let r = params.wheel_radius;
    let (cs, ca) = (params.longitudinal_stiffness, params.cornering_stiffness);

    let mut long_front = StateGradient::zeros();
    long_front[S::VX] = -cs * r * state.w_front / (vx * vx);
    long_front[S::W_FRONT] = cs * r / vx;

    let mut long_rear = StateGradient::zeros();
    long_rear[S::VX] = -cs * r * state.w_rear / (vx * vx);
    long_rear[S::W_REAR] = cs * r / vx;

    let num_f = state.vy + params.front_axle * state.yaw_rate;
    let af = num_f / vx;
    let df = 1.0 / (1.0 + af * af);
    let mut lat_front = StateGradient::zeros();
    lat_front[S::VX] = ca * df * num_f / (vx * vx);
    lat_front[S::VY] = -ca * df / vx;
    lat_front[S::YAW_RATE] = -ca * df * params.front_axle / vx;
    lat_front[S::STEER] = ca;

    let num_r = state.vy - params.rear_axle * state.yaw_rate;
    let ar = num_r / vx;
    let dr = 1.0 / (1.0 + ar * ar);
    let mut lat_rear = StateGradient::zeros();
    lat_rear[S::VX] = ca * dr * num_r / (vx * vx);
    lat_rear[S::VY] = -ca * dr / vx;
    lat_rear[S::YAW_RATE] = ca * dr * params.rear_axle / vx;

    Ok(ForceGradients {
        long_front,
        lat_front,
        long_rear,
        lat_rear,
    })
}

/// Analytic Jacobians `(∂f/∂x, ∂f/∂u)` of [`prediction_derivative`].
pub fn prediction_jacobians(
    state: &PredictionState,
    wind: &WindCondition,
    params: &VehicleParams,
    convention: KinematicsConvention,
) -> Result<
    (
        SMatrix<f64, PREDICTION_DIM, PREDICTION_DIM>,
        SMatrix<f64, PREDICTION_DIM, INPUT_DIM>,
    ),
    VehicleError,
> {
    use PredictionState as S;
    let front = bicycle_forces(state, params)?.front;
    let g = bicycle_force_gradients(state, params)?;
    let (sd, cd) = state.steer.sin_cos();
    let (sh, ch) = state.heading.sin_cos();
    let k = convention.lateral_sign();
    let m = params.mass;

    let mut long_front = 2.0 * (g.long_front * cd - g.lat_front * sd);
    long_front[S::STEER] += 2.0 * (-front.longitudinal * sd - front.lateral * cd);
    let mut lat_front = 2.0 * (g.long_front * sd + g.lat_front * cd);
    lat_front[S::STEER] += 2.0 * (front.longitudinal * cd - front.lateral * sd);

    let rel = wind.direction - state.heading;
    let (rel_x, rel_y) = relative_air(state.vx, state.vy, state.heading, wind);
    let (_, ddrag_x) = convention.drag(params.drag_lon, rel_x);
    let (_, ddrag_y) = convention.drag(params.drag_lat, rel_y);
    let mut drag_x = StateGradient::zeros();
    drag_x[S::VX] = ddrag_x;
    drag_x[S::HEADING] = ddrag_x * wind.speed * rel.sin();
    let mut drag_y = StateGradient::zeros();
    drag_y[S::VY] = ddrag_y;
    drag_y[S::HEADING] = -ddrag_y * wind.speed * rel.cos();

    let mut fx = SMatrix::<f64, PREDICTION_DIM, PREDICTION_DIM>::zeros();

    fx[(S::PX, S::HEADING)] = -state.vx * sh - state.vy * ch;
    fx[(S::PX, S::VX)] = ch;
    fx[(S::PX, S::VY)] = -sh;

    fx[(S::PY, S::HEADING)] = state.vx * ch - k * state.vy * sh;
    fx[(S::PY, S::VX)] = sh;
    fx[(S::PY, S::VY)] = k * ch;

    fx[(S::HEADING, S::YAW_RATE)] = 1.0;

    let vx_row = (long_front + 2.0 * g.long_rear - drag_x) / m;
    fx.set_row(S::VX, &vx_row.transpose());
    fx[(S::VX, S::YAW_RATE)] += state.vy;
    fx[(S::VX, S::VY)] += state.yaw_rate;

    let vy_row = (lat_front + 2.0 * g.lat_rear - drag_y) / m;
    fx.set_row(S::VY, &vy_row.transpose());
    fx[(S::VY, S::YAW_RATE)] -= state.vx;
    fx[(S::VY, S::VX)] -= state.yaw_rate;

    let yaw_row =
        (lat_front * params.front_axle - 2.0 * g.lat_rear * params.rear_axle) / params.yaw_inertia;
    fx.set_row(S::YAW_RATE, &yaw_row.transpose());

    let wheel = -params.wheel_radius / params.wheel_inertia;
    fx.set_row(S::W_FRONT, &(g.long_front * wheel).transpose());
    fx.set_row(S::W_REAR, &(g.long_rear * wheel).transpose());

    let mut fu = SMatrix::<f64, PREDICTION_DIM, INPUT_DIM>::zeros();
    fu[(S::W_REAR, 0)] = 1.0 / params.wheel_inertia;
    fu[(S::STEER, 1)] = 1.0;
    Ok((fx, fu))
}
