//! Wind disturbance: a Gaussian random walk on the wind speed with a weak
//! pull toward its mean, clamped at zero.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::vehicle::WindCondition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindParams {
    pub enabled: bool,
    /// Long-run mean and starting speed (m/s).
    pub mean: f64,
    /// Standard deviation `σ_rw` of the increment density η (m/s per √s).
    pub intensity: f64,
    /// Rate of the pull toward `mean` (1/s); zero gives a pure walk.
    pub reversion: f64,
    /// Direction in the inertial frame (rad), fixed for a run.
    pub direction: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            enabled: true,
            mean: 2.0,
            intensity: 3.6,
            reversion: 2.5,
            direction: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl WindParams {
    pub fn initial(&self) -> WindCondition {
        WindCondition {
            speed: if self.enabled { self.mean } else { 0.0 },
            direction: self.direction,
        }
    }
}

/// `v ← max(0, v + θ(v̄ − v)Δt + η√Δt)` with `η ~ N(0, σ_rw)`.
pub fn wind_sample<R: Rng + ?Sized>(
    rng: &mut R,
    previous: &WindCondition,
    dt: f64,
    params: &WindParams,
) -> WindCondition {
    if !params.enabled {
        return WindCondition {
            speed: 0.0,
            direction: params.direction,
        };
    }
    let eta = if params.intensity > 0.0 {
        Normal::new(0.0, params.intensity)
            .expect("finite positive deviation")
            .sample(rng)
    } else {
        0.0
    };
    let drift = params.reversion * (params.mean - previous.speed) * dt;
    WindCondition {
        speed: (previous.speed + drift + eta * dt.sqrt()).max(0.0),
        direction: params.direction,
    }
}
