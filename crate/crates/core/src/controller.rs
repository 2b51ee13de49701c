//! Real-time iteration controller and its fully converged SQP counterpart.
//!
//! Timing contract: the measurement taken at `t_k` cannot influence the
//! input over `[t_k, t_{k+1})`, which was fixed one sample earlier. The QP
//! therefore pins the first horizon input to that committed input `u_l` and
//! the controller emits the second one, to be applied from `t_{k+1}`.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::constraints::{ConstraintLimits, ConstraintLinearization, StageConstraints};
use crate::discretize::{
    implicit_euler_step, implicit_residual, step_jacobians, DiscretizeError, Model, ModelError,
    NewtonSettings, StageJacobians,
};
use crate::par::Execution;
use crate::qp::{
    build_qp, kkt_residuals, CostWeights, KktResiduals, QpError, QpInputs, QpProblem, QpSettings,
    QpSolution, QpSolver, QpStatus, StageLayout, WarmStart,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControllerMode {
    /// One linearize-solve-update cycle per sample.
    #[default]
    Rti,
    /// Cycles repeated on a frozen measurement until the step vanishes.
    Sqp,
}

impl ControllerMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rti" => Some(Self::Rti),
            "sqp" | "sqp-converged" => Some(Self::Sqp),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rti => "rti",
            Self::Sqp => "sqp",
        }
    }
}

/// How the guess is carried to the next sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GuessUpdate {
    /// Drop stage 0 and append one implicit step under the last input.
    #[default]
    Shift,
    /// Keep the solved trajectories as they are.
    Hold,
}

/// Box on the emitted input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl InputBounds {
    pub fn from_limits(limits: &ConstraintLimits) -> Self {
        Self {
            lower: DVector::from_vec(vec![-limits.torque_max, -limits.steer_rate_max]),
            upper: DVector::from_vec(vec![limits.torque_max, limits.steer_rate_max]),
        }
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        self.violation(u) <= tol
    }

    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .fold(0.0f64, |m, (v, (lo, hi))| m.max(lo - v).max(v - hi))
    }

    pub fn clip(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub dt: f64,
    pub mode: ControllerMode,
    pub weights: CostWeights,
    pub qp: QpSettings,
    pub newton: NewtonSettings,
    /// ∞-norm bound on the SQP step.
    pub sqp_tolerance: f64,
    pub sqp_max_iterations: usize,
    pub input_bounds: Option<InputBounds>,
    pub guess_update: GuessUpdate,
    /// Seed each QP with the previous duals.
    pub qp_warm_start: bool,
    /// Also emit constraint rows for stage 1. That stage is fully determined
    /// by the measurement and the committed input, so its rows cannot be
    /// influenced and only make the QP infeasible when the guess is off.
    pub constrain_first_stage: bool,
    pub record_qp: bool,
    /// Scheduling of the per-stage linearizations.
    pub execution: Execution,
}

impl ControllerConfig {
    pub fn new(horizon: usize, dt: f64, weights: CostWeights) -> Self {
        Self {
            horizon,
            dt,
            mode: ControllerMode::Rti,
            weights,
            qp: QpSettings::default(),
            newton: NewtonSettings::default(),
            sqp_tolerance: 1e-8,
            sqp_max_iterations: 50,
            input_bounds: None,
            guess_update: GuessUpdate::Shift,
            qp_warm_start: true,
            constrain_first_stage: false,
            record_qp: false,
            execution: Execution::Sequential,
        }
    }
}

/// Guess trajectories and the committed input.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// `N + 1` predicted states.
    pub state_guess: Vec<DVector<f64>>,
    /// `N` predicted inputs; the first equals the committed input.
    pub input_guess: Vec<DVector<f64>>,
    /// Input already in force over the current sampling period.
    pub last_input: DVector<f64>,
    pub warm: Option<WarmStart>,
    pub horizon: usize,
    pub dt: f64,
    pub mode: ControllerMode,
}

pub fn initialize_controller(
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    horizon: usize,
    dt: f64,
    mode: ControllerMode,
) -> Result<ControllerState, ControllerError> {
    if !x0.iter().chain(u0.iter()).all(|v| v.is_finite()) {
        return Err(ControllerError::NonFiniteMeasurement);
    }
    if horizon < 2 {
        return Err(ControllerError::Qp(QpError::HorizonTooShort(horizon)));
    }
    Ok(ControllerState {
        state_guess: vec![x0.clone(); horizon + 1],
        input_guess: vec![u0.clone(); horizon],
        last_input: u0.clone(),
        warm: None,
        horizon,
        dt,
        mode,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("reference window has {found} points, expected {expected}")]
    ReferenceLength { expected: usize, found: usize },
    #[error("measurement has {found} entries, expected {expected}")]
    MeasurementLength { expected: usize, found: usize },
    #[error("non-finite measurement")]
    NonFiniteMeasurement,
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Why a step did not produce a fresh optimal plan.
#[derive(Debug, Clone, PartialEq)]
pub enum StepFailure {
    Linearization(ModelError),
    Qp(QpStatus),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    /// Input to apply over the next sampling period.
    pub input: DVector<f64>,
    pub predicted_states: Vec<DVector<f64>>,
    pub predicted_inputs: Vec<DVector<f64>>,
    /// Status of the last QP solved in this step.
    pub qp_status: QpStatus,
    /// ADMM iterations summed over every QP of the step.
    pub qp_iterations: usize,
    /// QP solves that moved the iterate; a final solve that only certifies
    /// convergence is not counted.
    pub sqp_iterations: usize,
    pub qp_solves: usize,
    pub converged: bool,
    pub kkt: KktResiduals,
    /// Largest linearized friction row `G + Dδx + Eδu` over the horizon.
    pub friction_violation: f64,
    /// Largest linearized row of any kind.
    pub constraint_violation: f64,
    /// `max_i ‖F_g,i − x_g,i‖∞` at the first linearization of the step.
    pub initial_defect: f64,
    /// How far the emitted input had to be moved into the box.
    pub clip_amount: f64,
    pub failure: Option<StepFailure>,
    /// The terminal stage could not be integrated and was repeated instead.
    pub shift_fallback: bool,
    pub wall_time: Duration,
}

impl ControlDecision {
    pub fn is_fallback(&self) -> bool {
        self.failure.is_some()
    }
}

struct Cycle {
    qp: QpProblem,
    solution: QpSolution,
    step_norm: f64,
    initial_defect: f64,
}

/// A controller for one model and constraint set.
#[derive(Debug, Clone)]
pub struct Controller<M, C> {
    pub model: M,
    pub constraints: C,
    pub config: ControllerConfig,
    pub state: ControllerState,
    /// Final QP of the latest call, kept when `config.record_qp` is set.
    pub last_qp: Option<QpProblem>,
}

impl<M: Model, C: StageConstraints> Controller<M, C> {
    pub fn new(
        model: M,
        constraints: C,
        config: ControllerConfig,
        x0: &DVector<f64>,
        u0: &DVector<f64>,
    ) -> Result<Self, ControllerError> {
        for (expected, found) in [(model.state_dim(), x0.len()), (model.input_dim(), u0.len())] {
            if expected != found {
                return Err(ControllerError::MeasurementLength { expected, found });
            }
        }
        let state = initialize_controller(x0, u0, config.horizon, config.dt, config.mode)?;
        Ok(Self {
            model,
            constraints,
            config,
            state,
            last_qp: None,
        })
    }

    /// Runs the configured mode.
    pub fn step(
        &mut self,
        measurement: &DVector<f64>,
        reference: &[DVector<f64>],
    ) -> Result<ControlDecision, ControllerError> {
        match self.config.mode {
            ControllerMode::Rti => self.rti_step(measurement, reference),
            ControllerMode::Sqp => {
                let (tol, max) = (self.config.sqp_tolerance, self.config.sqp_max_iterations);
                self.sqp_solve(measurement, reference, tol, max)
            }
        }
    }

    pub fn rti_step(
        &mut self,
        measurement: &DVector<f64>,
        reference: &[DVector<f64>],
    ) -> Result<ControlDecision, ControllerError> {
        self.run(measurement, reference, 0.0, 1)
    }

    pub fn sqp_solve(
        &mut self,
        measurement: &DVector<f64>,
        reference: &[DVector<f64>],
        tolerance: f64,
        max_iterations: usize,
    ) -> Result<ControlDecision, ControllerError> {
        self.run(measurement, reference, tolerance, max_iterations.max(1))
    }

    fn check_inputs(&self, measurement: &DVector<f64>, reference: &[DVector<f64>]) -> Result<(), ControllerError> {
        let n = self.model.state_dim();
        if measurement.len() != n {
            return Err(ControllerError::MeasurementLength {
                expected: n,
                found: measurement.len(),
            });
        }
        if !measurement.iter().all(|v| v.is_finite()) {
            return Err(ControllerError::NonFiniteMeasurement);
        }
        if reference.len() != self.state.horizon + 1 {
            return Err(ControllerError::ReferenceLength {
                expected: self.state.horizon + 1,
                found: reference.len(),
            });
        }
        Ok(())
    }

    fn run(
        &mut self,
        measurement: &DVector<f64>,
        reference: &[DVector<f64>],
        tolerance: f64,
        max_cycles: usize,
    ) -> Result<ControlDecision, ControllerError> {
        let start = Instant::now();
        self.check_inputs(measurement, reference)?;
        let mut warm = if self.config.qp_warm_start {
            self.state.warm.take()
        } else {
            None
        };
        let mut qp_iterations = 0;
        let mut qp_solves = 0;
        let mut moves = 0;
        let mut converged = false;
        let mut failure = None;
        let mut initial_defect = f64::NAN;
        let mut last: Option<(QpProblem, QpSolution)> = None;

        for cycle in 0..max_cycles {
            match self.cycle(measurement, reference, warm.as_ref())? {
                Err(f) => {
                    failure = Some(f);
                    break;
                }
                Ok(c) => {
                    if cycle == 0 {
                        initial_defect = c.initial_defect;
                    }
                    qp_solves += 1;
                    qp_iterations += c.solution.iterations;
                    if !c.solution.is_solved() {
                        failure = Some(StepFailure::Qp(c.solution.status));
                        last = Some((c.qp, c.solution));
                        break;
                    }
                    self.apply(&c.qp, &c.solution);
                    warm = Some(WarmStart {
                        primal: DVector::zeros(c.solution.primal.len()),
                        eq_dual: c.solution.eq_dual.clone(),
                        ineq_dual: c.solution.ineq_dual.clone(),
                    });
                    let small = c.step_norm <= tolerance;
                    last = Some((c.qp, c.solution));
                    if small && cycle > 0 {
                        converged = true;
                        break;
                    }
                    moves += 1;
                    if small {
                        converged = true;
                        break;
                    }
                }
            }
        }
        if max_cycles == 1 {
            converged = failure.is_none();
        }
        // A failure after the iterate already moved keeps the improved plan.
        let fallback = failure.is_some() && moves == 0;
        let failure = if fallback { failure } else { None };

        let (qp_status, kkt, friction_violation, constraint_violation) = match &last {
            Some((qp, sol)) if !fallback => {
                let (fric, all) = self.violations(qp, sol);
                (sol.status, kkt_residuals(qp, sol), fric, all)
            }
            Some((_, sol)) => (sol.status, KktResiduals::default(), f64::NAN, f64::NAN),
            None => (QpStatus::MaxIterations, KktResiduals::default(), f64::NAN, f64::NAN),
        };

        if self.config.record_qp {
            self.last_qp = last.as_ref().map(|(qp, _)| qp.clone());
        }
        let planned = self.state.input_guess[1].clone();
        let (input, clip_amount) = match &self.config.input_bounds {
            Some(b) => (b.clip(&planned), b.violation(&planned)),
            None => (planned, 0.0),
        };
        let predicted_states = self.state.state_guess.clone();
        let predicted_inputs = self.state.input_guess.clone();

        if let Some((_, sol)) = &last {
            if !fallback {
                self.state.warm = Some(self.shift_warm_start(sol));
            }
        }
        self.state.last_input = input.clone();
        let shift_fallback = match self.config.guess_update {
            GuessUpdate::Shift => self.shift_guess(),
            GuessUpdate::Hold => false,
        };
        self.state.input_guess[0] = self.state.last_input.clone();

        Ok(ControlDecision {
            input,
            predicted_states,
            predicted_inputs,
            qp_status,
            qp_iterations,
            sqp_iterations: moves,
            qp_solves,
            converged,
            kkt,
            friction_violation,
            constraint_violation,
            initial_defect,
            clip_amount,
            failure,
            shift_fallback,
            wall_time: start.elapsed(),
        })
    }

    /// One linearize-build-solve cycle at the current guess.
    fn cycle(
        &self,
        measurement: &DVector<f64>,
        reference: &[DVector<f64>],
        warm: Option<&WarmStart>,
    ) -> Result<Result<Cycle, StepFailure>, ControllerError> {
        let (stages, constraints) = match self.linearize() {
            Ok(v) => v,
            Err(e) => return Ok(Err(StepFailure::Linearization(e))),
        };
        let initial_defect = stages
            .iter()
            .enumerate()
            .map(|(i, s)| (&s.f_g - &self.state.state_guess[i + 1]).amax())
            .fold(0.0f64, f64::max);
        let qp = build_qp(&QpInputs {
            state_guess: &self.state.state_guess,
            input_guess: &self.state.input_guess,
            reference,
            measured_state: measurement,
            last_input: &self.state.last_input,
            weights: &self.config.weights,
            stages: &stages,
            constraints: &constraints,
        })?;
        let solution = self.config.qp.solve(&qp, warm);
        let step_norm = solution.primal.amax();
        Ok(Ok(Cycle {
            qp,
            solution,
            step_norm,
            initial_defect,
        }))
    }

    /// Stage `i + 1` linearizations, in stage order.
    pub fn linearize(&self) -> Result<(Vec<StageJacobians>, Vec<ConstraintLinearization>), ModelError> {
        let st = &self.state;
        let dt = st.dt;
        let per_stage = self.config.execution.map_range(st.horizon, |i| {
            let x = &st.state_guess[i + 1];
            let u = &st.input_guess[i];
            let jac = step_jacobians(&self.model, x, &st.state_guess[i], u, dt)?;
            let con = if i == 0 && !self.config.constrain_first_stage {
                ConstraintLinearization::empty(x.len(), u.len())
            } else {
                self.constraints.linearize(x, u)?
            };
            Ok::<_, ModelError>((jac, con))
        });
        let mut stages = Vec::with_capacity(st.horizon);
        let mut cons = Vec::with_capacity(st.horizon);
        for r in per_stage {
            let (j, c) = r?;
            stages.push(j);
            cons.push(c);
        }
        Ok((stages, cons))
    }

    fn apply(&mut self, qp: &QpProblem, sol: &QpSolution) {
        let layout = qp.layout.expect("stage-structured problem");
        for i in 0..=layout.horizon {
            self.state.state_guess[i] += layout.state(&sol.primal, i);
        }
        for i in 0..layout.horizon {
            self.state.input_guess[i] += layout.input(&sol.primal, i);
        }
    }

    fn violations(&self, qp: &QpProblem, sol: &QpSolution) -> (f64, f64) {
        let mut gz = vec![0.0; qp.num_ineq()];
        qp.ineq_matrix.mul_vec(sol.primal.as_slice(), &mut gz);
        let per_stage = self.constraints.count();
        let friction = self.constraints.friction_rows();
        let mut fric = f64::NEG_INFINITY;
        let mut all = f64::NEG_INFINITY;
        for (r, v) in gz.iter().enumerate() {
            let excess = v - qp.ineq_rhs[r];
            all = all.max(excess);
            if per_stage > 0 && friction.contains(&(r % per_stage)) {
                fric = fric.max(excess);
            }
        }
        (fric, all)
    }

    /// Moves the duals one stage forward to match the shifted guess.
    fn shift_warm_start(&self, sol: &QpSolution) -> WarmStart {
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        let layout = StageLayout {
            state_dim: n,
            input_dim: m,
            horizon: self.state.horizon,
        };
        let mut eq = sol.eq_dual.clone();
        let mut ineq = sol.ineq_dual.clone();
        if self.config.guess_update == GuessUpdate::Shift {
            let base = n + 2 * m;
            let stages = layout.horizon;
            for k in 0..stages - 1 {
                for i in 0..n {
                    eq[base + k * n + i] = sol.eq_dual[base + (k + 1) * n + i];
                }
            }
            let rows = self.constraints.count();
            let constrained = if rows == 0 { 0 } else { ineq.len() / rows };
            for k in 0..constrained.saturating_sub(1) {
                for i in 0..rows {
                    ineq[k * rows + i] = sol.ineq_dual[(k + 1) * rows + i];
                }
            }
        }
        WarmStart {
            primal: DVector::zeros(layout.num_vars()),
            eq_dual: eq,
            ineq_dual: ineq,
        }
    }

    /// Drops stage 0 and appends one implicit step under the last input.
    /// Returns `true` when that step failed and the last state was repeated.
    pub fn shift_guess(&mut self) -> bool {
        shift_guess(&self.model, &mut self.state, &self.config.newton)
    }
}

/// Drops stage 0 of both guesses, extends the state guess by one implicit
/// step under the repeated last input, and returns whether that step failed
/// (the last state is then repeated).
pub fn shift_guess<M: Model + ?Sized>(model: &M, state: &mut ControllerState, newton: &NewtonSettings) -> bool {
    state.state_guess.remove(0);
    state.input_guess.remove(0);
    let last_u = state.input_guess.last().cloned().unwrap_or_else(|| state.last_input.clone());
    state.input_guess.push(last_u.clone());
    let last_x = state.state_guess.last().cloned().expect("non-empty guess");
    match implicit_euler_step(model, &last_x, &last_u, state.dt, newton) {
        Ok(x) => {
            state.state_guess.push(x);
            false
        }
        Err(_) => {
            state.state_guess.push(last_x);
            true
        }
    }
}

/// `max_i ‖x_i − x_{i−1} − f(x_i, u_{i−1})Δt‖∞` over a trajectory.
pub fn dynamics_defect<M: Model + ?Sized>(
    model: &M,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    dt: f64,
) -> Result<f64, DiscretizeError> {
    let mut worst = 0.0f64;
    for i in 1..states.len() {
        let r = implicit_residual(model, &states[i], &states[i - 1], &inputs[i - 1], dt)?;
        worst = worst.max(r.amax());
    }
    Ok(worst)
}

/// `N + 1` reference points starting at sample `k`; indices past the end
/// repeat the final point.
pub fn reference_window(points: &[DVector<f64>], k: usize, horizon: usize) -> Vec<DVector<f64>> {
    let last = points.len().saturating_sub(1);
    (0..=horizon).map(|i| points[(k + i).min(last)].clone()).collect()
}
