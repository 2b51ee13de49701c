//! Run configuration in a sectioned `key = value` text format (TOML syntax).
//!
//! Every key can also be given on the command line as `--section.key value`.
//! [`RunConfig::to_text`] writes every key, and parsing that text restores
//! the configuration exactly.

use std::fmt::Write as _;
use std::path::PathBuf;

use rti_nmpc::constraints::{ConstraintLimits, FrictionCircle};
use rti_nmpc::par::Execution;
use rti_nmpc::sim::{PositionFilter, ScenarioConfig, SpeedProfile, TrajectorySpec};
use rti_nmpc::vehicle::{KinematicsConvention, PredictionState, SteeringGeometry, TireModel};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Four-wheel plant tracked by the bicycle prediction model.
    Bicycle,
    /// Linear double integrator tracking a sine, used to check exactness.
    DoubleIntegrator,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bicycle => "bicycle",
            Self::DoubleIntegrator => "double-integrator",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    Rti,
    Sqp,
    Both,
}

impl ModeSelection {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rti" => Some(Self::Rti),
            "sqp" | "sqp-converged" => Some(Self::Sqp),
            "both" => Some(Self::Both),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rti => "rti",
            Self::Sqp => "sqp",
            Self::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub model: ModelKind,
    pub mode: ModeSelection,
    pub out: PathBuf,
    pub reps: usize,
    pub verbose: bool,
    /// Free-text description of the machine, copied into timing reports.
    pub host: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::nominal(),
            model: ModelKind::Bicycle,
            mode: ModeSelection::Rti,
            out: PathBuf::from("out"),
            reps: 1,
            verbose: false,
            host: String::new(),
        }
    }
}

/// Trajectory parameters of every kind, flattened for key access.
struct TrajectoryFields {
    kind: String,
    speed: f64,
    speed_end: f64,
    ramp: f64,
    heading: f64,
    radius: f64,
    width: f64,
    start: f64,
    duration: f64,
    length: f64,
    lobes: u32,
    amplitude: f64,
}

impl TrajectoryFields {
    fn of(traj: &TrajectorySpec) -> Self {
        let profile = traj.speed_profile();
        let mut f = Self {
            kind: traj.kind().to_string(),
            speed: profile.start,
            speed_end: profile.end,
            ramp: profile.ramp,
            heading: 0.0,
            radius: 30.0,
            width: 3.5,
            start: 2.0,
            duration: 3.0,
            length: 200.0,
            lobes: 3,
            amplitude: 0.3,
        };
        match *traj {
            TrajectorySpec::Straight { heading, .. } => f.heading = heading,
            TrajectorySpec::Arc { radius, .. } => f.radius = radius,
            TrajectorySpec::LaneChange {
                width, start, duration, ..
            } => {
                f.width = width;
                f.start = start;
                f.duration = duration;
            }
            TrajectorySpec::ClosedCourse {
                length, lobes, amplitude, ..
            } => {
                f.length = length;
                f.lobes = lobes;
                f.amplitude = amplitude;
            }
        }
        f
    }

    fn build(&self) -> Result<TrajectorySpec, String> {
        let speed = SpeedProfile {
            start: self.speed,
            end: self.speed_end,
            ramp: self.ramp,
        };
        Ok(match self.kind.as_str() {
            "straight" => TrajectorySpec::Straight {
                speed,
                heading: self.heading,
            },
            "arc" => TrajectorySpec::Arc {
                speed,
                radius: self.radius,
            },
            "lane-change" => TrajectorySpec::LaneChange {
                speed,
                width: self.width,
                start: self.start,
                duration: self.duration,
            },
            "closed-course" => TrajectorySpec::ClosedCourse {
                speed,
                length: self.length,
                lobes: self.lobes,
                amplitude: self.amplitude,
            },
            other => return Err(format!("unknown trajectory kind `{other}`")),
        })
    }

    /// Keys that apply to the current kind, in writing order.
    fn keys(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("kind", quote(&self.kind)),
            ("speed", num(self.speed)),
            ("speed_end", num(self.speed_end)),
            ("ramp", num(self.ramp)),
        ];
        match self.kind.as_str() {
            "straight" => v.push(("heading", num(self.heading))),
            "arc" => v.push(("radius", num(self.radius))),
            "lane-change" => {
                v.push(("width", num(self.width)));
                v.push(("start", num(self.start)));
                v.push(("duration", num(self.duration)));
            }
            _ => {
                v.push(("length", num(self.length)));
                v.push(("lobes", self.lobes.to_string()));
                v.push(("amplitude", num(self.amplitude)));
            }
        }
        v
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

fn quote(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

fn list(values: &[f64]) -> String {
    format!("[{}]", values.iter().map(|v| num(*v)).collect::<Vec<_>>().join(", "))
}

fn float(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, got {other}")),
    }
}

fn count(v: &Value) -> Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(format!("expected a nonnegative integer, got {other}")),
    }
}

fn flag(v: &Value) -> Result<bool, String> {
    v.as_bool().ok_or_else(|| format!("expected true or false, got {v}"))
}

fn text(v: &Value) -> Result<&str, String> {
    v.as_str().ok_or_else(|| format!("expected a string, got {v}"))
}

fn floats(v: &Value) -> Result<Vec<f64>, String> {
    v.as_array()
        .ok_or_else(|| format!("expected a list of numbers, got {v}"))?
        .iter()
        .map(float)
        .collect()
}

const OUTPUT_NAMES: [(&str, usize); 9] = [
    ("px", PredictionState::PX),
    ("py", PredictionState::PY),
    ("heading", PredictionState::HEADING),
    ("vx", PredictionState::VX),
    ("vy", PredictionState::VY),
    ("yaw_rate", PredictionState::YAW_RATE),
    ("w_front", PredictionState::W_FRONT),
    ("w_rear", PredictionState::W_REAR),
    ("steer", PredictionState::STEER),
];

fn output_index(name: &str) -> Result<usize, String> {
    OUTPUT_NAMES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, i)| *i)
        .ok_or_else(|| format!("unknown output `{name}`"))
}

fn output_name(index: usize) -> &'static str {
    OUTPUT_NAMES.iter().find(|(_, i)| *i == index).map_or("?", |(n, _)| n)
}

impl RunConfig {
    /// Parses a configuration file; unspecified keys keep their defaults.
    pub fn from_text(text: &str) -> Result<Self, Vec<String>> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| vec![format!("config: {}", e.message())])?;
        let mut cfg = Self::default();
        let mut issues = Vec::new();
        for (section, body) in &table {
            let Some(body) = body.as_table() else {
                issues.push(format!("{section}: expected a [section] of keys"));
                continue;
            };
            let mut keys: Vec<_> = body.iter().collect();
            keys.sort_by_key(|(k, _)| (k.as_str() != "kind", k.as_str() != "speed"));
            for (key, value) in keys {
                if let Err(e) = cfg.set(section, key, value) {
                    issues.push(format!("{section}.{key}: {e}"));
                }
            }
        }
        cfg.finish();
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(issues)
        }
    }

    /// Applies `section.key = value` pairs given as text, in order.
    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<(), Vec<String>> {
        let mut issues = Vec::new();
        for (path, raw) in overrides {
            let Some((section, key)) = path.split_once('.') else {
                issues.push(format!("{path}: expected section.key"));
                continue;
            };
            let value = format!("v = {raw}")
                .parse::<Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| Value::String(raw.clone()));
            if let Err(e) = self.set(section, key, &value) {
                issues.push(format!("{path}: {e}"));
            }
        }
        self.finish();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    fn finish(&mut self) {
        let s = &mut self.scenario;
        s.limits.friction_budget_sq = ConstraintLimits::for_vehicle(&s.vehicle).friction_budget_sq;
    }

    fn set(&mut self, section: &str, key: &str, v: &Value) -> Result<(), String> {
        let s = &mut self.scenario;
        match (section, key) {
            ("run", "mode") => {
                self.mode = ModeSelection::parse(text(v)?).ok_or("expected rti, sqp or both")?;
            }
            ("run", "out") => self.out = PathBuf::from(text(v)?),
            ("run", "reps") => {
                self.reps = count(v)?;
                if self.reps == 0 {
                    return Err("must be at least 1".into());
                }
            }
            ("run", "verbose") => self.verbose = flag(v)?,
            ("run", "host") => self.host = text(v)?.to_string(),

            ("scenario", "duration") => s.duration = float(v)?,
            ("scenario", "dt") => s.dt = float(v)?,
            ("scenario", "horizon") => s.horizon = count(v)?,
            ("scenario", "seed") => s.seed = count(v)? as u64,
            ("scenario", "initial_offset") => s.initial_offset = float(v)?,
            ("scenario", "transient") => s.transient = float(v)?,
            ("scenario", "truth_substeps") => s.truth_substeps = count(v)?,
            ("scenario", "linearization") => {
                s.linearization = Execution::parse(text(v)?).ok_or("expected sequential or parallel")?;
            }

            ("model", "kind") => {
                self.model = match text(v)? {
                    "bicycle" => ModelKind::Bicycle,
                    "double-integrator" => ModelKind::DoubleIntegrator,
                    _ => return Err("expected bicycle or double-integrator".into()),
                };
            }
            ("model", "convention") => {
                s.plant.convention = match text(v)? {
                    "standard" => KinematicsConvention::Standard,
                    "as-written" => KinematicsConvention::AsWritten,
                    _ => return Err("expected standard or as-written".into()),
                };
            }
            ("model", "tire") => {
                let reduction = match s.plant.tire {
                    TireModel::Dugoff { friction_reduction } => friction_reduction,
                    TireModel::Linear => None,
                };
                s.plant.tire = match text(v)? {
                    "dugoff" => TireModel::Dugoff {
                        friction_reduction: reduction,
                    },
                    "linear" => TireModel::Linear,
                    _ => return Err("expected dugoff or linear".into()),
                };
            }
            ("model", "friction_reduction") => {
                let e = float(v)?;
                let reduction = (e != 0.0).then_some(e);
                match &mut s.plant.tire {
                    TireModel::Dugoff { friction_reduction } => *friction_reduction = reduction,
                    TireModel::Linear => {
                        s.plant.tire = TireModel::Dugoff {
                            friction_reduction: reduction,
                        }
                    }
                }
            }
            ("model", "steering") => {
                s.plant.steering = match text(v)? {
                    "ackermann" => SteeringGeometry::Ackermann,
                    "parallel" => SteeringGeometry::Parallel,
                    _ => return Err("expected ackermann or parallel".into()),
                };
            }

            ("vehicle", k) => {
                let p = &mut s.vehicle;
                let slot = match k {
                    "mass" => &mut p.mass,
                    "yaw_inertia" => &mut p.yaw_inertia,
                    "front_axle" => &mut p.front_axle,
                    "rear_axle" => &mut p.rear_axle,
                    "half_track" => &mut p.half_track,
                    "wheel_radius" => &mut p.wheel_radius,
                    "wheel_inertia" => &mut p.wheel_inertia,
                    "drag_lon" => &mut p.drag_lon,
                    "drag_lat" => &mut p.drag_lat,
                    "longitudinal_stiffness" => &mut p.longitudinal_stiffness,
                    "cornering_stiffness" => &mut p.cornering_stiffness,
                    "friction" => &mut p.friction,
                    "gravity" => &mut p.gravity,
                    _ => return Err("unknown key".into()),
                };
                *slot = float(v)?;
            }

            ("limits", "torque_max") => s.limits.torque_max = float(v)?,
            ("limits", "steer_rate_max") => s.limits.steer_rate_max = float(v)?,
            ("limits", "steer_max") => s.limits.steer_max = float(v)?,
            ("limits", "friction_circle") => {
                s.friction = match text(v)? {
                    "per-axle" => FrictionCircle::PerAxle,
                    "whole-vehicle" => FrictionCircle::WholeVehicle,
                    _ => return Err("expected per-axle or whole-vehicle".into()),
                };
            }

            ("cost", "outputs") => {
                let names = v.as_array().ok_or("expected a list of output names")?;
                s.weights.outputs = names
                    .iter()
                    .map(|n| text(n).and_then(output_index))
                    .collect::<Result<_, _>>()?;
            }
            ("cost", "output_weights") => s.weights.output_weights = floats(v)?,
            ("cost", "output_ranges") => s.weights.output_ranges = floats(v)?,
            ("cost", "input_weights") => s.weights.input_weights = floats(v)?,
            ("cost", "input_ranges") => s.weights.input_ranges = floats(v)?,

            ("wind", "enabled") => s.wind.enabled = flag(v)?,
            ("wind", "mean") => s.wind.mean = float(v)?,
            ("wind", "intensity") => s.wind.intensity = float(v)?,
            ("wind", "reversion") => s.wind.reversion = float(v)?,
            ("wind", "direction") => s.wind.direction = float(v)?,

            ("noise", "enabled") => s.noise.enabled = flag(v)?,
            ("noise", "position") => s.noise.position = float(v)?,
            ("noise", "heading") => s.noise.heading = float(v)?,
            ("noise", "velocity") => s.noise.velocity = float(v)?,
            ("noise", "yaw_rate") => s.noise.yaw_rate = float(v)?,
            ("noise", "wheel_speed") => s.noise.wheel_speed = float(v)?,
            ("noise", "steer") => s.noise.steer = float(v)?,

            ("filter", "enabled") => s.filter_enabled = flag(v)?,
            ("filter", "cutoff") => s.filter_cutoff = float(v)?,
            ("filter", "positions") => {
                s.position_filter = PositionFilter::parse(text(v)?).ok_or("expected reference-relative or absolute")?;
            }

            ("trajectory", k) => {
                let mut f = TrajectoryFields::of(&s.trajectory);
                match k {
                    "kind" => f.kind = text(v)?.to_string(),
                    "speed" => {
                        let x = float(v)?;
                        if f.speed == f.speed_end {
                            f.speed_end = x;
                        }
                        f.speed = x;
                    }
                    "speed_end" => f.speed_end = float(v)?,
                    "ramp" => f.ramp = float(v)?,
                    "heading" => f.heading = float(v)?,
                    "radius" => f.radius = float(v)?,
                    "width" => f.width = float(v)?,
                    "start" => f.start = float(v)?,
                    "duration" => f.duration = float(v)?,
                    "length" => f.length = float(v)?,
                    "lobes" => f.lobes = u32::try_from(count(v)?).map_err(|e| e.to_string())?,
                    "amplitude" => f.amplitude = float(v)?,
                    _ => return Err("unknown key".into()),
                }
                s.trajectory = f.build()?;
            }

            ("solver", k) => {
                let q = &mut s.qp;
                match k {
                    "eps_abs" => q.eps_abs = float(v)?,
                    "eps_rel" => q.eps_rel = float(v)?,
                    "eps_infeasible" => q.eps_infeasible = float(v)?,
                    "max_iterations" => q.max_iterations = count(v)?,
                    "rho" => q.rho = float(v)?,
                    "sigma" => q.sigma = float(v)?,
                    "alpha" => q.alpha = float(v)?,
                    "adaptive_rho" => q.adaptive_rho = flag(v)?,
                    "polish" => q.polish = flag(v)?,
                    "polish_corrections" => q.polish_corrections = count(v)?,
                    "sqp_tolerance" => s.sqp_tolerance = float(v)?,
                    "sqp_max_iterations" => s.sqp_max_iterations = count(v)?,
                    _ => return Err("unknown key".into()),
                }
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Every key with its current value.
    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        let mut section = |name: &str, keys: Vec<(&str, String)>| {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        section(
            "run",
            vec![
                ("mode", quote(self.mode.as_str())),
                ("out", quote(&self.out.to_string_lossy())),
                ("reps", self.reps.to_string()),
                ("verbose", self.verbose.to_string()),
                ("host", quote(&self.host)),
            ],
        );
        section(
            "scenario",
            vec![
                ("duration", num(s.duration)),
                ("dt", num(s.dt)),
                ("horizon", s.horizon.to_string()),
                ("seed", s.seed.to_string()),
                ("initial_offset", num(s.initial_offset)),
                ("transient", num(s.transient)),
                ("truth_substeps", s.truth_substeps.to_string()),
                ("linearization", quote(s.linearization.as_str())),
            ],
        );
        let (tire, reduction) = match s.plant.tire {
            TireModel::Dugoff { friction_reduction } => ("dugoff", friction_reduction.unwrap_or(0.0)),
            TireModel::Linear => ("linear", 0.0),
        };
        let mut model = vec![
            ("kind", quote(self.model.as_str())),
            (
                "convention",
                quote(match s.plant.convention {
                    KinematicsConvention::Standard => "standard",
                    KinematicsConvention::AsWritten => "as-written",
                }),
            ),
            ("tire", quote(tire)),
        ];
        if tire == "dugoff" {
            model.push(("friction_reduction", num(reduction)));
        }
        model.push((
            "steering",
            quote(match s.plant.steering {
                SteeringGeometry::Ackermann => "ackermann",
                SteeringGeometry::Parallel => "parallel",
            }),
        ));
        section("model", model);
        let p = &s.vehicle;
        section(
            "vehicle",
            vec![
                ("mass", num(p.mass)),
                ("yaw_inertia", num(p.yaw_inertia)),
                ("front_axle", num(p.front_axle)),
                ("rear_axle", num(p.rear_axle)),
                ("half_track", num(p.half_track)),
                ("wheel_radius", num(p.wheel_radius)),
                ("wheel_inertia", num(p.wheel_inertia)),
                ("drag_lon", num(p.drag_lon)),
                ("drag_lat", num(p.drag_lat)),
                ("longitudinal_stiffness", num(p.longitudinal_stiffness)),
                ("cornering_stiffness", num(p.cornering_stiffness)),
                ("friction", num(p.friction)),
                ("gravity", num(p.gravity)),
            ],
        );
        section(
            "limits",
            vec![
                ("torque_max", num(s.limits.torque_max)),
                ("steer_rate_max", num(s.limits.steer_rate_max)),
                ("steer_max", num(s.limits.steer_max)),
                (
                    "friction_circle",
                    quote(match s.friction {
                        FrictionCircle::PerAxle => "per-axle",
                        FrictionCircle::WholeVehicle => "whole-vehicle",
                    }),
                ),
            ],
        );
        let w = &s.weights;
        section(
            "cost",
            vec![
                (
                    "outputs",
                    format!("[{}]", w.outputs.iter().map(|i| quote(output_name(*i))).collect::<Vec<_>>().join(", ")),
                ),
                ("output_weights", list(&w.output_weights)),
                ("output_ranges", list(&w.output_ranges)),
                ("input_weights", list(&w.input_weights)),
                ("input_ranges", list(&w.input_ranges)),
            ],
        );
        section(
            "wind",
            vec![
                ("enabled", s.wind.enabled.to_string()),
                ("mean", num(s.wind.mean)),
                ("intensity", num(s.wind.intensity)),
                ("reversion", num(s.wind.reversion)),
                ("direction", num(s.wind.direction)),
            ],
        );
        let n = &s.noise;
        section(
            "noise",
            vec![
                ("enabled", n.enabled.to_string()),
                ("position", num(n.position)),
                ("heading", num(n.heading)),
                ("velocity", num(n.velocity)),
                ("yaw_rate", num(n.yaw_rate)),
                ("wheel_speed", num(n.wheel_speed)),
                ("steer", num(n.steer)),
            ],
        );
        section(
            "filter",
            vec![
                ("enabled", s.filter_enabled.to_string()),
                ("cutoff", num(s.filter_cutoff)),
                ("positions", quote(s.position_filter.as_str())),
            ],
        );
        section("trajectory", TrajectoryFields::of(&s.trajectory).keys());
        let q = &s.qp;
        section(
            "solver",
            vec![
                ("eps_abs", num(q.eps_abs)),
                ("eps_rel", num(q.eps_rel)),
                ("eps_infeasible", num(q.eps_infeasible)),
                ("max_iterations", q.max_iterations.to_string()),
                ("rho", num(q.rho)),
                ("sigma", num(q.sigma)),
                ("alpha", num(q.alpha)),
                ("adaptive_rho", q.adaptive_rho.to_string()),
                ("polish", q.polish.to_string()),
                ("polish_corrections", q.polish_corrections.to_string()),
                ("sqp_tolerance", num(s.sqp_tolerance)),
                ("sqp_max_iterations", s.sqp_max_iterations.to_string()),
            ],
        );
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn edited_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&[
            ("trajectory.kind".into(), "lane-change".into()),
            ("trajectory.width".into(), "2.5".into()),
            ("trajectory.speed".into(), "6".into()),
            ("vehicle.mass".into(), "250".into()),
            ("model.friction_reduction".into(), "0.01".into()),
            ("cost.output_ranges".into(), "[0.25, 0.25, 1.5]".into()),
            ("run.host".into(), "lab machine \"A\"".into()),
            ("scenario.linearization".into(), "parallel".into()),
            ("solver.eps_abs".into(), "1e-7".into()),
        ])
        .unwrap();
        assert_eq!(
            cfg.scenario.limits.friction_budget_sq,
            ConstraintLimits::for_vehicle(&cfg.scenario.vehicle).friction_budget_sq
        );
        assert!(matches!(cfg.scenario.trajectory, TrajectorySpec::LaneChange { width, .. } if width == 2.5));
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_bad_key_is_reported() {
        let text = "[vehicle]\nmass = \"heavy\"\nwheels = 4\n[scenario]\nhorizon = -3\n";
        let issues = RunConfig::from_text(text).unwrap_err();
        assert_eq!(issues.len(), 3, "{issues:?}");
        for key in ["vehicle.mass", "vehicle.wheels", "scenario.horizon"] {
            assert!(issues.iter().any(|i| i.starts_with(key)), "{key} missing from {issues:?}");
        }
    }

    #[test]
    fn kind_is_applied_before_its_parameters() {
        let cfg = RunConfig::from_text("[trajectory]\nradius = 12.0\nkind = \"arc\"\n").unwrap();
        assert!(matches!(cfg.scenario.trajectory, TrajectorySpec::Arc { radius, .. } if radius == 12.0));
    }
}
