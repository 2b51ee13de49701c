use super::VehicleError;

/// Physical parameters shared by the four-wheel plant and the bicycle
/// prediction model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Yaw moment of inertia (kg·m²).
    pub yaw_inertia: f64,
    /// Distance from the centre of gravity to the front axle (m).
    pub front_axle: f64,
    /// Distance from the centre of gravity to the rear axle (m).
    pub rear_axle: f64,
    /// Half of the track width (m).
    pub half_track: f64,
    /// Effective wheel radius (m).
    pub wheel_radius: f64,
    /// Wheel spin inertia (kg·m²).
    pub wheel_inertia: f64,
    /// Longitudinal aerodynamic drag coefficient (N·s²/m²).
    pub drag_lon: f64,
    /// Lateral aerodynamic drag coefficient (N·s²/m²).
    pub drag_lat: f64,
    /// Tire longitudinal stiffness (N).
    pub longitudinal_stiffness: f64,
    /// Tire cornering stiffness (N/rad).
    pub cornering_stiffness: f64,
    /// Road friction coefficient.
    pub friction: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 200.0,
            yaw_inertia: 150.0,
            front_axle: 0.8,
            rear_axle: 1.0,
            half_track: 0.6,
            wheel_radius: 0.6,
            wheel_inertia: 0.2,
            drag_lon: 0.01,
            drag_lat: 0.05,
            longitudinal_stiffness: 600_000.0,
            cornering_stiffness: 250_000.0,
            friction: 0.9,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    /// Axle-to-axle distance `l_f + l_r`.
    pub fn wheelbase(&self) -> f64 {
        self.front_axle + self.rear_axle
    }

    /// Static vertical load carried by one front wheel (N).
    pub fn front_wheel_load(&self) -> f64 {
        self.mass * self.gravity * self.rear_axle / (2.0 * self.wheelbase())
    }

    /// Static vertical load carried by one rear wheel (N).
    pub fn rear_wheel_load(&self) -> f64 {
        self.mass * self.gravity * self.front_axle / (2.0 * self.wheelbase())
    }

    /// Fraction of the vehicle weight resting on the front axle.
    pub fn front_load_share(&self) -> f64 {
        self.rear_axle / self.wheelbase()
    }

    /// Fraction of the vehicle weight resting on the rear axle.
    pub fn rear_load_share(&self) -> f64 {
        self.front_axle / self.wheelbase()
    }

    /// Every field that violates its invariant, by name.
    pub fn invalid_fields(&self) -> Vec<(&'static str, f64)> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("front_axle", self.front_axle),
            ("rear_axle", self.rear_axle),
            ("half_track", self.half_track),
            ("wheel_radius", self.wheel_radius),
            ("wheel_inertia", self.wheel_inertia),
            ("longitudinal_stiffness", self.longitudinal_stiffness),
            ("cornering_stiffness", self.cornering_stiffness),
            ("gravity", self.gravity),
        ];
        let mut bad: Vec<_> = positive
            .into_iter()
            .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
            .collect();
        for (name, v) in [("drag_lon", self.drag_lon), ("drag_lat", self.drag_lat)] {
            if !(v.is_finite() && v >= 0.0) {
                bad.push((name, v));
            }
        }
        if !(self.friction > 0.0 && self.friction <= 1.5) {
            bad.push(("friction", self.friction));
        }
        bad
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        match self.invalid_fields().first() {
            None => Ok(()),
            Some(&(name, value)) => Err(VehicleError::InvalidParameter { name, value }),
        }
    }
}
