//! Slip kinematics, tire force laws and Ackermann steering geometry.

use super::{VehicleError, VehicleParams};

/// Slip quantities are singular at standstill; every model refuses to
/// evaluate them below this longitudinal speed (m/s).
pub const MIN_LONGITUDINAL_SPEED: f64 = 0.5;

/// Below this commanded angle the Ackermann split is the identity.
const STRAIGHT_STEER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axle {
    Front,
    Rear,
}

/// Body-frame planar velocity of the chassis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyMotion {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipQuantities {
    /// Slip angle (rad).
    pub angle: f64,
    /// Longitudinal slip ratio.
    pub ratio: f64,
}

/// Longitudinal and lateral force in the tire frame (N).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TireForces {
    pub longitudinal: f64,
    pub lateral: f64,
}

impl TireForces {
    pub fn magnitude(&self) -> f64 {
        self.longitudinal.hypot(self.lateral)
    }
}

pub(crate) fn check_speed(vx: f64) -> Result<(), VehicleError> {
    if vx >= MIN_LONGITUDINAL_SPEED {
        Ok(())
    } else {
        Err(VehicleError::BelowMinimumSpeed { vx })
    }
}

/// Slip angle of a wheel on `axle` steered by `steer`.
pub fn slip_angle(
    motion: &BodyMotion,
    steer: f64,
    axle: Axle,
    params: &VehicleParams,
) -> Result<f64, VehicleError> {
    check_speed(motion.vx)?;
    Ok(match axle {
        Axle::Front => {
            steer - ((motion.vy + params.front_axle * motion.yaw_rate) / motion.vx).atan()
        }
        Axle::Rear => -((motion.vy - params.rear_axle * motion.yaw_rate) / motion.vx).atan(),
    })
}

/// Slip ratio `(r·w − v_x) / v_x` of a wheel spinning at `wheel_speed`.
pub fn slip_ratio(wheel_speed: f64, vx: f64, params: &VehicleParams) -> Result<f64, VehicleError> {
    check_speed(vx)?;
    Ok((params.wheel_radius * wheel_speed - vx) / vx)
}

pub fn slip_quantities(
    motion: &BodyMotion,
    steer: f64,
    wheel_speed: f64,
    axle: Axle,
    params: &VehicleParams,
) -> Result<SlipQuantities, VehicleError> {
    Ok(SlipQuantities {
        angle: slip_angle(motion, steer, axle, params)?,
        ratio: slip_ratio(wheel_speed, motion.vx, params)?,
    })
}

pub fn tire_forces_linear(slip: &SlipQuantities, params: &VehicleParams) -> TireForces {
    TireForces {
        longitudinal: params.longitudinal_stiffness * slip.ratio,
        lateral: params.cornering_stiffness * slip.angle,
    }
}

/// Default coefficient of the speed-dependent friction reduction.
pub const DEFAULT_FRICTION_REDUCTION: f64 = 0.01;

/// Dugoff tire with an optional speed-dependent friction reduction
/// `μ·(1 − e_r·v·sqrt(σ² + tan²α))`, floored at zero.
///
/// In the saturated regime the force is written as `μF_z(1 − λ/2)` along
/// the stiffness-weighted slip direction, which is the closed form of
/// `C·s/(1+σ)·λ(2−λ)` and stays finite as `1 + σ → 0`.
pub fn tire_forces_dugoff(
    slip: &SlipQuantities,
    vertical_load: f64,
    sliding_speed: f64,
    reduction: Option<f64>,
    params: &VehicleParams,
) -> TireForces {
    let long = params.longitudinal_stiffness * slip.ratio;
    let lat = params.cornering_stiffness * slip.angle.tan();
    let demand = long.hypot(lat);
    if demand == 0.0 {
        return TireForces::default();
    }
    let one_plus = (1.0 + slip.ratio).max(0.0);
    let mut mu = params.friction;
    if let Some(er) = reduction {
        let slide = slip.ratio.hypot(slip.angle.tan());
        mu *= (1.0 - er * sliding_speed * slide).max(0.0);
    }
    let lambda = mu * vertical_load * one_plus / (2.0 * demand);
    if lambda >= 1.0 {
        TireForces {
            longitudinal: long / one_plus,
            lateral: lat / one_plus,
        }
    } else {
        let magnitude = mu * vertical_load * (1.0 - 0.5 * lambda);
        TireForces {
            longitudinal: magnitude * long / demand,
            lateral: magnitude * lat / demand,
        }
    }
}

/// Left and right front-wheel angles for a commanded average angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelAngles {
    pub left: f64,
    pub right: f64,
}

pub fn ackermann_angles(steer: f64, params: &VehicleParams) -> Result<WheelAngles, VehicleError> {
    if steer.abs() < STRAIGHT_STEER {
        return Ok(WheelAngles { left: steer, right: steer });
    }
    if !(steer.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(VehicleError::SteeringOutOfRange { steer });
    }
    let wheelbase = params.wheelbase();
    let radius = wheelbase / steer.tan();
    if radius.abs() <= params.half_track {
        return Err(VehicleError::TurnInsideTrack { radius });
    }
    Ok(WheelAngles {
        left: (wheelbase / (radius - params.half_track)).atan(),
        right: (wheelbase / (radius + params.half_track)).atan(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn straight(vx: f64, vy: f64) -> BodyMotion {
        BodyMotion { vx, vy, yaw_rate: 0.0 }
    }

    #[test]
    fn zero_sideslip_gives_zero_angles() {
        let p = VehicleParams::default();
        let m = straight(10.0, 0.0);
        assert_eq!(slip_angle(&m, 0.0, Axle::Front, &p).unwrap(), 0.0);
        assert_eq!(slip_angle(&m, 0.0, Axle::Rear, &p).unwrap(), 0.0);
    }

    #[test]
    fn slip_ratio_arithmetic() {
        let p = VehicleParams::default();
        let sigma = slip_ratio(10.5 / p.wheel_radius, 10.0, &p).unwrap();
        assert_abs_diff_eq!(sigma, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn rear_slip_angle_from_lateral_velocity() {
        let p = VehicleParams::default();
        let a = slip_angle(&straight(10.0, 1.0), 0.0, Axle::Rear, &p).unwrap();
        assert_abs_diff_eq!(a, -0.09966865249116204, epsilon = 1e-12);
    }

    #[test]
    fn standstill_is_a_domain_error() {
        let p = VehicleParams::default();
        assert!(matches!(
            slip_ratio(0.0, 0.1, &p),
            Err(VehicleError::BelowMinimumSpeed { .. })
        ));
        assert!(slip_angle(&straight(0.49, 0.0), 0.0, Axle::Front, &p).is_err());
    }

    #[test]
    fn linear_tire_values() {
        let p = VehicleParams::default();
        let zero = tire_forces_linear(&SlipQuantities { angle: 0.0, ratio: 0.0 }, &p);
        assert_eq!(zero, TireForces::default());
        let lat = tire_forces_linear(&SlipQuantities { angle: 0.001, ratio: 0.0 }, &p);
        assert_abs_diff_eq!(lat.lateral, 250.0, epsilon = 1e-9);
        let lon = tire_forces_linear(&SlipQuantities { angle: 0.0, ratio: 0.0005 }, &p);
        assert_abs_diff_eq!(lon.longitudinal, 300.0, epsilon = 1e-9);
    }

    #[test]
    fn dugoff_no_slip_is_zero() {
        let p = VehicleParams::default();
        let f = tire_forces_dugoff(&SlipQuantities { angle: 0.0, ratio: 0.0 }, 500.0, 8.0, None, &p);
        assert_eq!(f, TireForces::default());
    }

    #[test]
    fn dugoff_unsaturated_is_scaled_linear() {
        let p = VehicleParams::default();
        let slip = SlipQuantities { angle: 1e-5, ratio: 2e-5 };
        let d = tire_forces_dugoff(&slip, 1e5, 8.0, None, &p);
        let l = tire_forces_linear(&slip, &p);
        assert_abs_diff_eq!(d.longitudinal, l.longitudinal / (1.0 + slip.ratio), epsilon = 1e-9);
        // tan(α) vs α differs by ~α³/3 * C_a, far below 1e-9 here.
        assert_abs_diff_eq!(d.lateral, l.lateral / (1.0 + slip.ratio), epsilon = 1e-9);
    }

    #[test]
    fn friction_reduction_never_increases_force() {
        let p = VehicleParams::default();
        let slip = SlipQuantities { angle: 0.1, ratio: 0.05 };
        let plain = tire_forces_dugoff(&slip, 500.0, 10.0, None, &p);
        let reduced = tire_forces_dugoff(&slip, 500.0, 10.0, Some(DEFAULT_FRICTION_REDUCTION), &p);
        assert!(reduced.magnitude() < plain.magnitude());
    }

    #[test]
    fn ackermann_straight_and_mirror() {
        let p = VehicleParams::default();
        assert_eq!(ackermann_angles(0.0, &p).unwrap(), WheelAngles { left: 0.0, right: 0.0 });
        let pos = ackermann_angles(0.1, &p).unwrap();
        let neg = ackermann_angles(-0.1, &p).unwrap();
        assert_abs_diff_eq!(neg.left, -pos.right, epsilon = 1e-15);
        assert_abs_diff_eq!(neg.right, -pos.left, epsilon = 1e-15);
    }

    #[test]
    fn ackermann_rejects_turn_inside_track() {
        let p = VehicleParams::default();
        // tan(δ) = L / t_w puts the turn centre on the inner wheel.
        let steer = (p.wheelbase() / p.half_track).atan() + 1e-6;
        assert!(matches!(
            ackermann_angles(steer, &p),
            Err(VehicleError::TurnInsideTrack { .. })
        ));
    }
}
