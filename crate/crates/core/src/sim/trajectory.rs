//! Reference trajectory generators, all parameterized by time through a
//! speed profile.

use std::f64::consts::PI;

/// Along-track speed: `start` ramping linearly to `end` over `ramp` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProfile {
    pub start: f64,
    pub end: f64,
    pub ramp: f64,
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        Self {
            start: speed,
            end: speed,
            ramp: 0.0,
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        if self.ramp > 0.0 && t < self.ramp {
            self.start + (self.end - self.start) * t / self.ramp
        } else {
            self.end
        }
    }

    /// Distance covered since `t = 0`.
    pub fn distance(&self, t: f64) -> f64 {
        if self.ramp <= 0.0 {
            return self.end * t;
        }
        let tr = t.min(self.ramp);
        let ramp_part = self.start * tr + 0.5 * (self.end - self.start) * tr * tr / self.ramp;
        ramp_part + self.end * (t - self.ramp).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectorySpec {
    Straight {
        speed: SpeedProfile,
        /// Direction of travel (rad).
        heading: f64,
    },
    /// Circle through the origin, tangent to the x axis; positive radius
    /// turns left.
    Arc { speed: SpeedProfile, radius: f64 },
    /// Lateral move of `width` along `y` with a quintic blend over `duration`
    /// seconds starting at `start`.
    LaneChange {
        speed: SpeedProfile,
        width: f64,
        start: f64,
        duration: f64,
    },
    /// Closed loop of perimeter `length` whose curvature oscillates `lobes`
    /// times per lap: heading `2πs/L + amplitude·sin(2π·lobes·s/L)`.
    ClosedCourse {
        speed: SpeedProfile,
        length: f64,
        lobes: u32,
        amplitude: f64,
    },
}

impl TrajectorySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Straight { .. } => "straight",
            Self::Arc { .. } => "arc",
            Self::LaneChange { .. } => "lane-change",
            Self::ClosedCourse { .. } => "closed-course",
        }
    }

    pub fn speed_profile(&self) -> SpeedProfile {
        match *self {
            Self::Straight { speed, .. }
            | Self::Arc { speed, .. }
            | Self::LaneChange { speed, .. }
            | Self::ClosedCourse { speed, .. } => speed,
        }
    }
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self::ClosedCourse {
            speed: SpeedProfile::constant(8.0),
            length: 200.0,
            lobes: 3,
            amplitude: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("unknown trajectory kind `{0}`")]
    UnknownKind(String),
    #[error("trajectory parameter `{name}` has invalid value {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("reference requested at negative time {0}")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub px: f64,
    pub py: f64,
    /// Along-track speed, tracked as the body longitudinal speed.
    pub speed: f64,
    pub heading: f64,
}

/// Nodes of one closed-course lap for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
struct CourseTable {
    step: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

const COURSE_SEGMENTS: usize = 4096;

fn course_heading(s: f64, length: f64, lobes: u32, amplitude: f64) -> f64 {
    let phase = 2.0 * PI * s / length;
    phase + amplitude * (lobes as f64 * phase).sin()
}

impl CourseTable {
    fn build(length: f64, lobes: u32, amplitude: f64) -> Self {
        // 3-point Gauss–Legendre per segment.
        let nodes = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
        let step = length / COURSE_SEGMENTS as f64;
        let mut x = Vec::with_capacity(COURSE_SEGMENTS + 1);
        let mut y = Vec::with_capacity(COURSE_SEGMENTS + 1);
        let (mut cx, mut cy) = (0.0, 0.0);
        x.push(cx);
        y.push(cy);
        for k in 0..COURSE_SEGMENTS {
            let mid = (k as f64 + 0.5) * step;
            for (xi, w) in nodes {
                let psi = course_heading(mid + 0.5 * step * xi, length, lobes, amplitude);
                cx += 0.5 * step * w * psi.cos();
                cy += 0.5 * step * w * psi.sin();
            }
            x.push(cx);
            y.push(cy);
        }
        Self { step, x, y }
    }
}

/// A validated trajectory with any precomputed tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    spec: TrajectorySpec,
    table: Option<CourseTable>,
}

fn positive(name: &'static str, value: f64) -> Result<(), TrajectoryError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(TrajectoryError::InvalidParameter { name, value })
    }
}

fn finite(name: &'static str, value: f64) -> Result<(), TrajectoryError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrajectoryError::InvalidParameter { name, value })
    }
}

/// Quintic blend with zero slope and curvature at both ends.
fn smoothstep(tau: f64) -> (f64, f64) {
    let t = tau.clamp(0.0, 1.0);
    let value = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let slope = if (0.0..=1.0).contains(&tau) {
        30.0 * t * t * (1.0 - t) * (1.0 - t)
    } else {
        0.0
    };
    (value, slope)
}

impl Trajectory {
    pub fn new(spec: TrajectorySpec) -> Result<Self, TrajectoryError> {
        let sp = spec.speed_profile();
        finite("speed", sp.start)?;
        finite("speed_end", sp.end)?;
        if !(sp.ramp.is_finite() && sp.ramp >= 0.0) {
            return Err(TrajectoryError::InvalidParameter {
                name: "ramp",
                value: sp.ramp,
            });
        }
        let table = match spec {
            TrajectorySpec::Straight { heading, .. } => {
                finite("heading", heading)?;
                None
            }
            TrajectorySpec::Arc { radius, .. } => {
                positive("radius", radius.abs())?;
                None
            }
            TrajectorySpec::LaneChange {
                width,
                start,
                duration,
                ..
            } => {
                finite("width", width)?;
                finite("start", start)?;
                positive("duration", duration)?;
                None
            }
            TrajectorySpec::ClosedCourse {
                length,
                lobes,
                amplitude,
                ..
            } => {
                positive("length", length)?;
                if lobes < 2 {
                    return Err(TrajectoryError::InvalidParameter {
                        name: "lobes",
                        value: lobes as f64,
                    });
                }
                finite("amplitude", amplitude)?;
                Some(CourseTable::build(length, lobes, amplitude))
            }
        };
        Ok(Self { spec, table })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    pub fn point(&self, t: f64) -> Result<ReferencePoint, TrajectoryError> {
        if !(t >= 0.0) {
            return Err(TrajectoryError::NegativeTime(t));
        }
        let sp = self.spec.speed_profile();
        let speed = sp.speed(t);
        let s = sp.distance(t);
        let point = match self.spec {
            TrajectorySpec::Straight { heading, .. } => ReferencePoint {
                px: s * heading.cos(),
                py: s * heading.sin(),
                speed,
                heading,
            },
            TrajectorySpec::Arc { radius, .. } => {
                let angle = s / radius;
                ReferencePoint {
                    px: radius * angle.sin(),
                    py: radius - radius * angle.cos(),
                    speed,
                    heading: angle,
                }
            }
            TrajectorySpec::LaneChange {
                width,
                start,
                duration,
                ..
            } => {
                let (blend, slope) = smoothstep((t - start) / duration);
                let vy = width * slope / duration;
                ReferencePoint {
                    px: s,
                    py: width * blend,
                    speed,
                    heading: vy.atan2(speed),
                }
            }
            TrajectorySpec::ClosedCourse {
                length,
                lobes,
                amplitude,
                ..
            } => {
                let table = self.table.as_ref().expect("course table");
                let laps = (s / length).floor();
                let local = s - laps * length;
                let k = ((local / table.step) as usize).min(COURSE_SEGMENTS - 1);
                let h = table.step;
                let u = (local - k as f64 * h) / h;
                let psi0 = course_heading(k as f64 * h, length, lobes, amplitude);
                let psi1 = course_heading((k + 1) as f64 * h, length, lobes, amplitude);
                let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
                let h10 = u.powi(3) - 2.0 * u * u + u;
                let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
                let h11 = u.powi(3) - u * u;
                let hermite = |p0: f64, p1: f64, d0: f64, d1: f64| h00 * p0 + h10 * h * d0 + h01 * p1 + h11 * h * d1;
                ReferencePoint {
                    px: hermite(table.x[k], table.x[k + 1], psi0.cos(), psi1.cos()),
                    py: hermite(table.y[k], table.y[k + 1], psi0.sin(), psi1.sin()),
                    speed,
                    heading: course_heading(local, length, lobes, amplitude) + 2.0 * PI * laps,
                }
            }
        };
        Ok(point)
    }

    /// Reference points at `t = k·dt` for `k = 0..count`.
    pub fn sample(&self, dt: f64, count: usize) -> Result<Vec<ReferencePoint>, TrajectoryError> {
        (0..count).map(|k| self.point(k as f64 * dt)).collect()
    }
}

/// One-off evaluation; build a [`Trajectory`] to reuse the closed-course table.
pub fn reference_trajectory(t: f64, spec: &TrajectorySpec) -> Result<ReferencePoint, TrajectoryError> {
    Trajectory::new(*spec)?.point(t)
}
