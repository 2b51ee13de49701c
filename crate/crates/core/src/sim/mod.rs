//! Closed-loop simulation: truth plant, wind, measurement noise, filtering,
//! reference generation and logging around a controller.

mod filter;
mod log;
mod noise;
mod trajectory;
mod wind;

pub use filter::{butterworth_step, FilterCoefficients, FilterState};
pub use log::{SimLog, SimSummary, Stats, StepRecord, BOX_TOLERANCE, FRICTION_TOLERANCE, SETTLE_THRESHOLD};
pub use noise::{add_measurement_noise, NoiseConfig};
pub use trajectory::{
    reference_trajectory, ReferencePoint, SpeedProfile, Trajectory, TrajectoryError, TrajectorySpec,
};
pub use wind::{wind_sample, WindParams};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{ConstraintLimits, FrictionCircle, VehicleConstraints};
use crate::controller::{
    reference_window, ControlDecision, Controller, ControllerConfig, ControllerMode, InputBounds,
};
use crate::discretize::rk4_truth_integrate;
use crate::par::Execution;
use crate::qp::{CostWeights, QpSettings};
use crate::vehicle::{
    BicycleModel, ControlInput, Plant, PlantOptions, PlantState, PredictionState, VehicleParams,
    WindCondition, MIN_LONGITUDINAL_SPEED,
};

/// How the position channels pass through the low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositionFilter {
    /// Filter the deviation from the current reference point and add the
    /// reference back, so a moving position is not delayed.
    #[default]
    ReferenceRelative,
    /// Filter the raw coordinates like every other channel.
    Absolute,
}

impl PositionFilter {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reference-relative" => Some(Self::ReferenceRelative),
            "absolute" => Some(Self::Absolute),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReferenceRelative => "reference-relative",
            Self::Absolute => "absolute",
        }
    }
}

/// Default tracking cost: positions and speed normalized by their expected
/// error ranges, input increments by the input ranges.
pub fn default_weights() -> CostWeights {
    CostWeights {
        outputs: vec![PredictionState::PX, PredictionState::PY, PredictionState::VX],
        output_weights: vec![1.0, 1.0, 1.0],
        output_ranges: vec![0.5, 0.5, 2.0],
        input_weights: vec![5.0, 5.0],
        input_ranges: vec![600.0, 3.0],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// s
    pub duration: f64,
    /// Sampling period (s).
    pub dt: f64,
    pub horizon: usize,
    pub vehicle: VehicleParams,
    pub limits: ConstraintLimits,
    pub friction: FrictionCircle,
    pub weights: CostWeights,
    pub wind: WindParams,
    pub noise: NoiseConfig,
    pub filter_enabled: bool,
    pub filter_cutoff: f64,
    pub position_filter: PositionFilter,
    pub trajectory: TrajectorySpec,
    /// Lateral displacement of the start pose from the first reference point (m).
    pub initial_offset: f64,
    pub seed: u64,
    /// Initial window excluded from the RMS statistics (s).
    pub transient: f64,
    pub plant: PlantOptions,
    pub qp: QpSettings,
    pub sqp_tolerance: f64,
    pub sqp_max_iterations: usize,
    /// RK4 substeps per sample for the truth plant; 0 picks a stable count
    /// from the wheel-spin time constant each sample.
    pub truth_substeps: usize,
    /// Scheduling of the controller's per-stage linearizations.
    pub linearization: Execution,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

/// One validation problem, keyed by its configuration name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ConfigIssue>),
}

impl ScenarioConfig {
    pub fn nominal() -> Self {
        let vehicle = VehicleParams::default();
        let limits = ConstraintLimits::for_vehicle(&vehicle);
        Self {
            duration: 24.0,
            dt: 0.04,
            horizon: 15,
            vehicle,
            limits,
            friction: FrictionCircle::PerAxle,
            weights: default_weights(),
            wind: WindParams::default(),
            noise: NoiseConfig::default(),
            filter_enabled: true,
            filter_cutoff: 3.5,
            position_filter: PositionFilter::ReferenceRelative,
            trajectory: TrajectorySpec::default(),
            initial_offset: 1.0,
            seed: 1,
            transient: 5.0,
            plant: PlantOptions::default(),
            qp: QpSettings::default(),
            sqp_tolerance: 1e-8,
            sqp_max_iterations: 50,
            truth_substeps: 0,
            linearization: Execution::Sequential,
        }
    }

    /// Number of logged samples, `duration / dt`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| {
            issues.push(ConfigIssue {
                key: key.to_string(),
                message,
            })
        };
        if !(self.dt.is_finite() && self.dt > 0.0) {
            bad("scenario.dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            bad("scenario.duration", format!("must be positive, got {}", self.duration));
        } else if self.dt > 0.0 {
            let ratio = self.duration / self.dt;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                bad("scenario.duration", format!("{} is not a multiple of dt = {}", self.duration, self.dt));
            }
        }
        if self.horizon < 2 {
            bad("scenario.horizon", format!("must be at least 2, got {}", self.horizon));
        }
        if !(self.transient.is_finite() && self.transient >= 0.0) {
            bad("scenario.transient", format!("must be nonnegative, got {}", self.transient));
        }
        if !self.initial_offset.is_finite() {
            bad("scenario.initial_offset", "must be finite".to_string());
        }
        for (name, value) in self.vehicle.invalid_fields() {
            bad(&format!("vehicle.{name}"), format!("invalid value {value}"));
        }
        for (name, value) in self.limits.invalid_fields() {
            bad(&format!("limits.{name}"), format!("must be positive, got {value}"));
        }
        for (name, value) in self.noise.invalid_fields() {
            bad(&format!("noise.{name}"), format!("must be nonnegative, got {value}"));
        }
        for (name, value, ok) in [
            ("wind.mean", self.wind.mean, self.wind.mean >= 0.0),
            ("wind.intensity", self.wind.intensity, self.wind.intensity >= 0.0),
            ("wind.reversion", self.wind.reversion, self.wind.reversion >= 0.0),
            ("wind.direction", self.wind.direction, true),
        ] {
            if !(value.is_finite() && ok) {
                bad(name, format!("invalid value {value}"));
            }
        }
        if self.filter_enabled
            && !(self.filter_cutoff > 0.0 && self.filter_cutoff < 0.5 / self.dt)
        {
            bad("filter.cutoff", format!("must lie in (0, {}) Hz, got {}", 0.5 / self.dt, self.filter_cutoff));
        }
        if let Err(e) = self.weights.validate(crate::vehicle::PREDICTION_DIM, crate::vehicle::INPUT_DIM) {
            bad("cost", e.to_string());
        }
        match Trajectory::new(self.trajectory) {
            Err(TrajectoryError::InvalidParameter { name, value }) => {
                bad(&format!("trajectory.{name}"), format!("invalid value {value}"))
            }
            Err(e) => bad("trajectory", e.to_string()),
            Ok(_) => {
                let v0 = self.trajectory.speed_profile().speed(0.0);
                if !(v0 > MIN_LONGITUDINAL_SPEED) {
                    bad("trajectory.speed", format!("initial speed {v0} must exceed {MIN_LONGITUDINAL_SPEED} m/s"));
                }
            }
        }
        for (name, value) in [
            ("solver.eps_abs", self.qp.eps_abs),
            ("solver.eps_rel", self.qp.eps_rel),
            ("solver.rho", self.qp.rho),
            ("solver.sigma", self.qp.sigma),
            ("solver.sqp_tolerance", self.sqp_tolerance),
        ] {
            if !(value.is_finite() && value > 0.0) {
                bad(name, format!("must be positive, got {value}"));
            }
        }
        if !(self.qp.alpha > 0.0 && self.qp.alpha < 2.0) {
            bad("solver.alpha", format!("must lie in (0, 2), got {}", self.qp.alpha));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SimError::Invalid(issues))
        }
    }
}

/// Substeps keeping classical RK4 inside its stability region for the
/// wheel-spin mode `−r²C_s/(J v_x)`.
pub fn stable_substeps(params: &VehicleParams, vx: f64, dt: f64) -> usize {
    let rate = params.wheel_radius.powi(2) * params.longitudinal_stiffness
        / (params.wheel_inertia * vx.abs().max(MIN_LONGITUDINAL_SPEED));
    ((dt * rate / 2.0).ceil() as usize).max(1)
}

/// Filters the axle-averaged measurement channel by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFilter {
    state: FilterState,
    positions: PositionFilter,
}

impl MeasurementFilter {
    pub fn new(coefficients: FilterCoefficients, positions: PositionFilter, first: &PredictionState, reference: &ReferencePoint) -> Self {
        let channels = Self::channels(positions, first, reference);
        Self {
            state: FilterState::at_rest(coefficients, &channels),
            positions,
        }
    }

    fn channels(positions: PositionFilter, m: &PredictionState, reference: &ReferencePoint) -> Vec<f64> {
        let mut v: Vec<f64> = m.to_vector().iter().copied().collect();
        if positions == PositionFilter::ReferenceRelative {
            v[PredictionState::PX] -= reference.px;
            v[PredictionState::PY] -= reference.py;
        }
        v
    }

    pub fn step(&mut self, m: &PredictionState, reference: &ReferencePoint) -> PredictionState {
        let raw = Self::channels(self.positions, m, reference);
        let mut out = butterworth_step(&mut self.state, &raw);
        if self.positions == PositionFilter::ReferenceRelative {
            out[PredictionState::PX] += reference.px;
            out[PredictionState::PY] += reference.py;
        }
        PredictionState::from_slice(&out)
    }
}

const NOISE_STREAM: u64 = 1;
const WIND_STREAM: u64 = 2;

/// A closed-loop run that can be advanced one sample at a time.
pub struct ClosedLoop {
    pub scenario: ScenarioConfig,
    pub controller: Controller<BicycleModel, VehicleConstraints>,
    plant: Plant,
    references: Vec<ReferencePoint>,
    reference_outputs: Vec<DVector<f64>>,
    filter: Option<MeasurementFilter>,
    noise_rng: ChaCha8Rng,
    wind_rng: ChaCha8Rng,
    truth: PlantState,
    wind: WindCondition,
    applied: ControlInput,
    applied_from: Option<f64>,
    pub log: SimLog,
    last_decision: Option<ControlDecision>,
}

impl ClosedLoop {
    pub fn new(scenario: &ScenarioConfig, mode: ControllerMode) -> Result<Self, SimError> {
        scenario.validate()?;
        let s = scenario.clone();
        let trajectory = Trajectory::new(s.trajectory).expect("validated");
        let steps = s.steps();
        let references = trajectory.sample(s.dt, steps + s.horizon + 1).expect("validated");
        let tracked = &s.weights.outputs;
        let reference_outputs = references
            .iter()
            .map(|r| {
                DVector::from_iterator(
                    tracked.len(),
                    tracked.iter().map(|&i| match i {
                        PredictionState::PX => r.px,
                        PredictionState::PY => r.py,
                        PredictionState::VX => r.speed,
                        PredictionState::HEADING => r.heading,
                        _ => 0.0,
                    }),
                )
            })
            .collect();

        let r0 = references[0];
        let (sh, ch) = r0.heading.sin_cos();
        let truth = PlantState::rolling(
            r0.px - s.initial_offset * sh,
            r0.py + s.initial_offset * ch,
            r0.heading,
            r0.speed,
            s.vehicle.wheel_radius,
        );

        let mut noise_rng = ChaCha8Rng::seed_from_u64(s.seed);
        noise_rng.set_stream(NOISE_STREAM);
        let mut wind_rng = ChaCha8Rng::seed_from_u64(s.seed);
        wind_rng.set_stream(WIND_STREAM);

        let model = BicycleModel {
            params: s.vehicle,
            wind: WindCondition::calm(),
            convention: s.plant.convention,
        };
        let constraints = VehicleConstraints {
            params: s.vehicle,
            limits: s.limits,
            friction: s.friction,
        };
        let mut config = ControllerConfig::new(s.horizon, s.dt, s.weights.clone());
        config.mode = mode;
        config.qp = s.qp;
        config.sqp_tolerance = s.sqp_tolerance;
        config.sqp_max_iterations = s.sqp_max_iterations;
        config.input_bounds = Some(InputBounds::from_limits(&s.limits));
        config.execution = s.linearization;
        // Placeholder start; replaced by the first filtered measurement.
        let x0 = truth.to_prediction().to_dvector();
        let controller = Controller::new(model, constraints, config, &x0, &DVector::zeros(2))
            .expect("dimensions match the bicycle model");

        Ok(Self {
            log: SimLog {
                mode,
                seed: s.seed,
                dt: s.dt,
                transient: s.transient,
                records: Vec::with_capacity(steps),
                aborted: None,
            },
            plant: Plant {
                params: s.vehicle,
                options: s.plant,
            },
            wind: s.wind.initial(),
            scenario: s,
            controller,
            references,
            reference_outputs,
            filter: None,
            noise_rng,
            wind_rng,
            truth,
            applied: ControlInput::default(),
            applied_from: None,
            last_decision: None,
        })
    }

    pub fn truth(&self) -> &PlantState {
        &self.truth
    }

    pub fn last_decision(&self) -> Option<&ControlDecision> {
        self.last_decision.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.log.aborted.is_some() || self.log.records.len() >= self.scenario.steps()
    }

    /// Measure, filter, call the controller, log, and advance the plant by
    /// one sample. Returns `false` once the run is over.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let s = &self.scenario;
        let k = self.log.records.len();
        let t = k as f64 * s.dt;
        let reference = self.references[k];

        let measurement = add_measurement_noise(&self.truth, &mut self.noise_rng, &s.noise);
        let averaged = measurement.to_prediction();
        let filtered = if s.filter_enabled {
            let coefficients = FilterCoefficients::butterworth(s.filter_cutoff, s.dt);
            let positions = s.position_filter;
            self.filter
                .get_or_insert_with(|| MeasurementFilter::new(coefficients, positions, &averaged, &reference))
                .step(&averaged, &reference)
        } else {
            averaged
        };
        if k == 0 {
            let x0 = filtered.to_dvector();
            let st = &mut self.controller.state;
            st.state_guess.iter_mut().for_each(|x| x.copy_from(&x0));
        }
        if k > 0 {
            self.wind = wind_sample(&mut self.wind_rng, &self.wind, s.dt, &s.wind);
        }

        let window = reference_window(&self.reference_outputs, k, s.horizon);
        let decision = match self.controller.step(&filtered.to_dvector(), &window) {
            Ok(d) => d,
            Err(e) => {
                self.log.aborted = Some(format!("controller error at t = {t}: {e}"));
                return false;
            }
        };

        let error = (self.truth.px - reference.px).hypot(self.truth.py - reference.py);
        self.log.records.push(StepRecord {
            step: k,
            time: t,
            truth: self.truth,
            measurement,
            filtered,
            reference,
            input: self.applied,
            input_from: self.applied_from,
            wind: self.wind,
            tracking_error: error,
            qp_status: decision.qp_status,
            fallback: decision.is_fallback(),
            qp_iterations: decision.qp_iterations,
            sqp_iterations: decision.sqp_iterations,
            friction_violation: decision.friction_violation,
            box_violation: s.limits.box_violation(&self.applied),
            step_time: decision.wall_time.as_secs_f64(),
        });

        let substeps = if s.truth_substeps > 0 {
            s.truth_substeps
        } else {
            stable_substeps(&s.vehicle, self.truth.vx, s.dt)
        };
        match rk4_truth_integrate(&self.plant, &self.truth, &self.applied, &self.wind, s.dt, substeps) {
            Ok(next) if next.is_finite() => self.truth = next,
            Ok(_) => {
                self.log.aborted = Some(format!("non-finite plant state after t = {t}"));
                return false;
            }
            Err(e) => {
                self.log.aborted = Some(format!("plant integration failed after t = {t}: {e}"));
                return false;
            }
        }
        self.applied = ControlInput::from_slice(decision.input.as_slice());
        self.applied_from = Some(t);
        self.last_decision = Some(decision);
        !self.is_done()
    }

    pub fn run(mut self) -> SimLog {
        while self.step() {}
        self.log
    }
}

/// Runs one scenario to completion (or to an early abort, which is recorded
/// in the log).
pub fn run_closed_loop(scenario: &ScenarioConfig, mode: ControllerMode) -> Result<SimLog, SimError> {
    Ok(ClosedLoop::new(scenario, mode)?.run())
}

/// Independent runs, one harness per entry; results keep the input order.
pub fn run_batch(
    runs: &[(ScenarioConfig, ControllerMode)],
    execution: Execution,
) -> Vec<Result<SimLog, SimError>> {
    execution.map(runs, |(s, m)| run_closed_loop(s, *m))
}
