//! Scalar re-transcription of the vehicle equations, written line by line
//! from the model equations without sharing code with the library.

use rand::Rng;
use rti_nmpc::vehicle::{PlantState, PredictionState, VehicleParams, WindCondition};

/// Standard Dugoff law: `f(λ) = λ(2 − λ)` below one, one above.
pub fn dugoff(sigma: f64, alpha: f64, fz: f64, p: &VehicleParams) -> (f64, f64) {
    let cs = p.longitudinal_stiffness;
    let ca = p.cornering_stiffness;
    let denom = 2.0 * ((cs * sigma).powi(2) + (ca * alpha.tan()).powi(2)).sqrt();
    if denom == 0.0 {
        return (0.0, 0.0);
    }
    let lambda = p.friction * fz * (1.0 + sigma) / denom;
    let f = if lambda < 1.0 { lambda * (2.0 - lambda) } else { 1.0 };
    (cs * sigma / (1.0 + sigma) * f, ca * alpha.tan() / (1.0 + sigma) * f)
}

pub struct FourWheelOptions {
    /// Evaluate `ṗ_y` and the drag terms literally as printed.
    pub printed: bool,
    pub linear_tires: bool,
    pub parallel_steering: bool,
}

/// Rates of `[p_x, p_y, ψ, v_x, v_y, ω, w_fl, w_fr, w_rl, w_rr, δ_c]`.
pub fn four_wheel_rates(
    s: &[f64; 11],
    torque: f64,
    steer_rate: f64,
    wind: &WindCondition,
    p: &VehicleParams,
    o: &FourWheelOptions,
) -> [f64; 11] {
    let [_px, _py, psi, vx, vy, om, w_fl, w_fr, w_rl, w_rr, dc] = *s;
    let big_l = p.front_axle + p.rear_axle;
    let (d_l, d_r) = if o.parallel_steering || dc == 0.0 {
        (dc, dc)
    } else {
        let radius = big_l / dc.tan();
        ((big_l / (radius - p.half_track)).atan(), (big_l / (radius + p.half_track)).atan())
    };
    let alpha_front = |d: f64| d - ((vy + p.front_axle * om) / vx).atan();
    let alpha_rear = -((vy - p.rear_axle * om) / vx).atan();
    let sigma = |w: f64| (p.wheel_radius * w - vx) / vx;
    let fz_front = p.mass * p.gravity * p.rear_axle / big_l / 2.0;
    let fz_rear = p.mass * p.gravity * p.front_axle / big_l / 2.0;
    let tire = |sg: f64, al: f64, fz: f64| {
        if o.linear_tires {
            (p.longitudinal_stiffness * sg, p.cornering_stiffness * al)
        } else {
            dugoff(sg, al, fz, p)
        }
    };
    let (fx_fl, fy_fl) = tire(sigma(w_fl), alpha_front(d_l), fz_front);
    let (fx_fr, fy_fr) = tire(sigma(w_fr), alpha_front(d_r), fz_front);
    let (fx_rl, fy_rl) = tire(sigma(w_rl), alpha_rear, fz_rear);
    let (fx_rr, fy_rr) = tire(sigma(w_rr), alpha_rear, fz_rear);

    let air_x = vx + wind.speed * (wind.direction - psi).cos();
    let air_y = vy + wind.speed * (wind.direction - psi).sin();
    let (drag_x, drag_y, py_dot) = if o.printed {
        (
            p.drag_lon * air_x.powi(2),
            p.drag_lat * air_y.powi(2),
            vx * psi.sin() - vy * psi.cos(),
        )
    } else {
        (
            p.drag_lon * air_x * air_x.abs(),
            p.drag_lat * air_y * air_y.abs(),
            vx * psi.sin() + vy * psi.cos(),
        )
    };
    let m = p.mass;
    let vx_dot = om * vy
        + (fx_fl * d_l.cos() + fx_fr * d_r.cos() - fy_fl * d_l.sin() - fy_fr * d_r.sin() + fx_rl + fx_rr - drag_x) / m;
    let vy_dot = -om * vx
        + (fx_fl * d_l.sin() + fx_fr * d_r.sin() + fy_fl * d_l.cos() + fy_fr * d_r.cos() + fy_rl + fy_rr - drag_y) / m;
    let om_dot = ((fx_fl * d_l.sin() + fx_fr * d_r.sin() + fy_fl * d_l.cos() + fy_fr * d_r.cos()) * p.front_axle
        - (fy_rl + fy_rr) * p.rear_axle
        + (fx_fr * d_r.cos() - fx_fl * d_l.cos() + fy_fl * d_l.sin() - fy_fr * d_r.sin() - fx_rl + fx_rr) * p.half_track)
        / p.yaw_inertia;
    let j = p.wheel_inertia;
    let r = p.wheel_radius;
    [
        vx * psi.cos() - vy * psi.sin(),
        py_dot,
        om,
        vx_dot,
        vy_dot,
        om_dot,
        -r * fx_fl / j,
        -r * fx_fr / j,
        (torque - r * fx_rl) / j,
        (torque - r * fx_rr) / j,
        steer_rate,
    ]
}

pub fn plant_array(s: &PlantState) -> [f64; 11] {
    [s.px, s.py, s.heading, s.vx, s.vy, s.yaw_rate, s.w_fl, s.w_fr, s.w_rl, s.w_rr, s.steer]
}

/// A driving state with bounded slips and steering.
pub fn random_plant_state<R: Rng>(rng: &mut R, p: &VehicleParams) -> PlantState {
    let vx = rng.gen_range(2.0..20.0);
    let wheel = |rng: &mut R| vx * (1.0 + rng.gen_range(-0.05..0.05)) / p.wheel_radius;
    PlantState {
        px: rng.gen_range(-50.0..50.0),
        py: rng.gen_range(-50.0..50.0),
        heading: rng.gen_range(-3.0..3.0),
        vx,
        vy: rng.gen_range(-1.0..1.0),
        yaw_rate: rng.gen_range(-1.0..1.0),
        w_fl: wheel(rng),
        w_fr: wheel(rng),
        w_rl: wheel(rng),
        w_rr: wheel(rng),
        steer: rng.gen_range(-0.6..0.6),
    }
}

pub fn random_prediction_state<R: Rng>(rng: &mut R, p: &VehicleParams) -> PredictionState {
    let s = random_plant_state(rng, p);
    PredictionState {
        px: s.px,
        py: s.py,
        heading: s.heading,
        vx: s.vx,
        vy: s.vy,
        yaw_rate: s.yaw_rate,
        w_front: s.w_fl,
        w_rear: s.w_rl,
        steer: s.steer,
    }
}

pub fn random_wind<R: Rng>(rng: &mut R) -> WindCondition {
    WindCondition {
        speed: rng.gen_range(0.0..5.0),
        direction: rng.gen_range(-3.0..3.0),
    }
}
