//! Double integrator tracking a sine, closed around the same controller.
//!
//! The prediction model is linear, so one RTI step already solves the full
//! problem and RTI and SQP inputs coincide to solver precision.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rti_nmpc::constraints::Unconstrained;
use rti_nmpc::controller::{Controller, ControllerConfig, ControllerError, ControllerMode};
use rti_nmpc::discretize::{implicit_euler_step, DiscretizeError, Model, ModelError, NewtonSettings};
use rti_nmpc::qp::CostWeights;
use rti_nmpc::sim::ScenarioConfig;

/// `ẋ = A x + B u` with constant matrices.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearModel {
    pub fn double_integrator() -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        }
    }
}

impl Model for LinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        Ok(&self.a * x + &self.b * u)
    }
    fn analytic_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<Result<(DMatrix<f64>, DMatrix<f64>), ModelError>> {
        Some(Ok((self.a.clone(), self.b.clone())))
    }
}

pub fn weights() -> CostWeights {
    CostWeights {
        outputs: vec![0, 1],
        output_weights: vec![1.0, 0.5],
        output_ranges: vec![1.0, 2.0],
        input_weights: vec![5.0],
        input_ranges: vec![4.0],
    }
}

/// Position `sin(t/2)` and its velocity.
pub fn reference(t: f64) -> DVector<f64> {
    DVector::from_vec(vec![(0.5 * t).sin(), 0.5 * (0.5 * t).cos()])
}

#[derive(Debug, thiserror::Error)]
pub enum LinearError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Plant(#[from] DiscretizeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRecord {
    pub time: f64,
    pub position: f64,
    pub velocity: f64,
    pub reference: f64,
    pub input: f64,
    pub sqp_iterations: usize,
    pub step_time: f64,
}

#[derive(Debug, Clone)]
pub struct LinearLog {
    pub mode: ControllerMode,
    pub records: Vec<LinearRecord>,
}

impl LinearLog {
    pub fn rms_error(&self) -> f64 {
        let n = self.records.len().max(1) as f64;
        (self.records.iter().map(|r| (r.position - r.reference).powi(2)).sum::<f64>() / n).sqrt()
    }

    pub fn csv_string(&self, timing: bool) -> String {
        let mut s = String::from("time,position,velocity,reference,input,sqp_iterations");
        if timing {
            s.push_str(",step_time");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                r.time, r.position, r.velocity, r.reference, r.input, r.sqp_iterations
            );
            if timing {
                let _ = write!(s, ",{}", r.step_time);
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_text(&self, timing: bool) -> String {
        let mut s = format!(
            "mode = {}\nmodel = double-integrator\nsteps = {}\nrms_error = {}\n",
            self.mode.as_str(),
            self.records.len(),
            self.rms_error()
        );
        if timing {
            let times: Vec<f64> = self.records.iter().map(|r| r.step_time).collect();
            let stats = rti_nmpc::sim::Stats::of(&times);
            let _ = writeln!(s, "step_time_mean_ms = {}", stats.mean * 1e3);
            let _ = writeln!(s, "step_time_p95_ms = {}", stats.p95 * 1e3);
        }
        s
    }
}

/// Runs the double integrator from one unit of position offset for the
/// scenario's duration, step and horizon.
pub fn run_linear(scenario: &ScenarioConfig, mode: ControllerMode) -> Result<LinearLog, LinearError> {
    let model = LinearModel::double_integrator();
    let (dt, horizon) = (scenario.dt, scenario.horizon);
    let mut config = ControllerConfig::new(horizon, dt, weights());
    config.mode = mode;
    config.qp = scenario.qp.clone();
    config.sqp_tolerance = scenario.sqp_tolerance;
    config.sqp_max_iterations = scenario.sqp_max_iterations;
    config.execution = scenario.linearization;
    let mut x = reference(0.0);
    x[0] += scenario.initial_offset;
    let u = DVector::zeros(1);
    let free = Unconstrained {
        state_dim: 2,
        input_dim: 1,
    };
    let mut controller = Controller::new(model.clone(), free, config, &x, &u)?;
    let newton = NewtonSettings::default();
    let mut records = Vec::with_capacity(scenario.steps());
    for k in 0..scenario.steps() {
        let t = k as f64 * dt;
        let window: Vec<_> = (0..=horizon).map(|i| reference(t + i as f64 * dt)).collect();
        let start = Instant::now();
        let decision = controller.step(&x, &window)?;
        let step_time = start.elapsed().as_secs_f64();
        records.push(LinearRecord {
            time: t,
            position: x[0],
            velocity: x[1],
            reference: window[0][0],
            input: decision.input[0],
            sqp_iterations: decision.sqp_iterations,
            step_time,
        });
        x = implicit_euler_step(&model, &x, &decision.input, dt, &newton)?;
    }
    Ok(LinearLog { mode, records })
}
