use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::vehicle::{PlantState, PLANT_DIM};

/// Standard deviations of the additive measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// m
    pub position: f64,
    /// rad
    pub heading: f64,
    /// m/s, both body velocities
    pub velocity: f64,
    /// rad/s
    pub yaw_rate: f64,
    /// rad/s, each wheel
    pub wheel_speed: f64,
    /// rad
    pub steer: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            position: 0.05,
            heading: 0.01,
            velocity: 0.05,
            yaw_rate: 0.01,
            wheel_speed: 0.01,
            steer: 0.01,
        }
    }
}

impl NoiseConfig {
    pub fn silent() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// Deviations in plant-state order.
    pub fn sigmas(&self) -> [f64; PLANT_DIM] {
        if !self.enabled {
            return [0.0; PLANT_DIM];
        }
        [
            self.position,
            self.position,
            self.heading,
            self.velocity,
            self.velocity,
            self.yaw_rate,
            self.wheel_speed,
            self.wheel_speed,
            self.wheel_speed,
            self.wheel_speed,
            self.steer,
        ]
    }

    pub fn invalid_fields(&self) -> Vec<(&'static str, f64)> {
        [
            ("position", self.position),
            ("heading", self.heading),
            ("velocity", self.velocity),
            ("yaw_rate", self.yaw_rate),
            ("wheel_speed", self.wheel_speed),
            ("steer", self.steer),
        ]
        .into_iter()
        .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
        .collect()
    }
}

/// Independent zero-mean Gaussian perturbation of every channel.
///
/// One normal draw is consumed per channel even when its deviation is zero,
/// so changing one deviation never shifts the others' sequences.
pub fn add_measurement_noise<R: Rng + ?Sized>(truth: &PlantState, rng: &mut R, noise: &NoiseConfig) -> PlantState {
    let mut v = truth.to_vector();
    let sigmas = noise.sigmas();
    for (x, s) in v.iter_mut().zip(sigmas) {
        let z: f64 = StandardNormal.sample(rng);
        *x += s * z;
    }
    PlantState::from_vector(&v)
}
