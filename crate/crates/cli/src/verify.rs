//! Self-checks runnable from the command line.

use std::fmt::Write as _;

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rti_nmpc::controller::{dynamics_defect, ControllerMode};
use rti_nmpc::discretize::{implicit_euler_step, implicit_residual, Model, ModelError, NewtonSettings};
use rti_nmpc::qp::{solve_qp, QpProblem, QpSettings};
use rti_nmpc::sim::{ClosedLoop, ScenarioConfig};
use rti_nmpc::vehicle::{BicycleModel, KinematicsConvention, PredictionState, VehicleParams, WindCondition};

use crate::linear::LinearModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Jacobian,
    Qp,
    ImplicitEuler,
    Defect,
}

impl Suite {
    pub fn expand(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Jacobian, Suite::Qp, Suite::ImplicitEuler, Suite::Defect],
            s => vec![s],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Jacobian => "jacobian",
            Suite::Qp => "qp",
            Suite::ImplicitEuler => "implicit-euler",
            Suite::Defect => "defect",
        }
    }
}

/// Deliberate errors for checking that the suites catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Corrupts the sensitivity of lateral to longitudinal acceleration.
    Jacobian,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub suite: Suite,
    pub summary: String,
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const JACOBIAN_TOL: f64 = 1e-5;
pub const QP_TOL: f64 = 1e-6;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const DEFECT_TOL: f64 = 1e-8;

const STATE_NAMES: [&str; 9] = ["px", "py", "heading", "vx", "vy", "yaw_rate", "w_front", "w_rear", "steer"];
const INPUT_NAMES: [&str; 2] = ["torque", "steer_rate"];

pub fn run_suite(suite: Suite, fault: Option<Fault>, seed: u64) -> SuiteResult {
    let (summary, failures) = match suite {
        Suite::All => unreachable!("expanded by the caller"),
        Suite::Jacobian => jacobians(fault, seed),
        Suite::Qp => qp(seed),
        Suite::ImplicitEuler => implicit_euler(seed),
        Suite::Defect => defect(),
    };
    SuiteResult {
        suite,
        summary,
        failures,
    }
}

struct Faulty(BicycleModel);

impl Model for Faulty {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.0.derivative(x, u)
    }
    fn analytic_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Option<Result<(DMatrix<f64>, DMatrix<f64>), ModelError>> {
        self.0.analytic_jacobians(x, u).map(|r| {
            r.map(|(mut fx, fu)| {
                let v = &mut fx[(PredictionState::VY, PredictionState::VX)];
                *v += 1e-2 * (1.0 + v.abs());
                (fx, fu)
            })
        })
    }
}

fn random_state(rng: &mut ChaCha8Rng, p: &VehicleParams) -> DVector<f64> {
    let vx = rng.gen_range(2.0..20.0);
    let mut wheel = || vx * (1.0 + rng.gen_range(-0.05..0.05)) / p.wheel_radius;
    let (w_front, w_rear) = (wheel(), wheel());
    PredictionState {
        px: rng.gen_range(-50.0..50.0),
        py: rng.gen_range(-50.0..50.0),
        heading: rng.gen_range(-3.0..3.0),
        vx,
        vy: rng.gen_range(-1.0..1.0),
        yaw_rate: rng.gen_range(-1.0..1.0),
        w_front,
        w_rear,
        steer: rng.gen_range(-0.6..0.6),
    }
    .to_dvector()
}

fn random_input(rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_vec(vec![rng.gen_range(-300.0..300.0), rng.gen_range(-1.5..1.5)])
}

fn central_difference<M: Model + ?Sized>(model: &M, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    let n = model.state_dim();
    let mut fx = DMatrix::zeros(n, x.len());
    let mut fu = DMatrix::zeros(n, u.len());
    for c in 0..x.len() {
        let h = 1e-6 * x[c].abs().max(1.0);
        let (mut p, mut m) = (x.clone(), x.clone());
        p[c] += h;
        m[c] -= h;
        fx.set_column(c, &((model.derivative(&p, u)? - model.derivative(&m, u)?) / (2.0 * h)));
    }
    for c in 0..u.len() {
        let h = 1e-6 * u[c].abs().max(1.0);
        let (mut p, mut m) = (u.clone(), u.clone());
        p[c] += h;
        m[c] -= h;
        fu.set_column(c, &((model.derivative(x, &p)? - model.derivative(x, &m)?) / (2.0 * h)));
    }
    Ok((fx, fu))
}

fn fmt_vec(v: &DVector<f64>) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(", "))
}

fn jacobians(fault: Option<Fault>, seed: u64) -> (String, Vec<String>) {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..100 {
        let bicycle = BicycleModel {
            params: p,
            wind: WindCondition {
                speed: rng.gen_range(0.0..5.0),
                direction: rng.gen_range(-3.0..3.0),
            },
            convention: if k % 2 == 0 {
                KinematicsConvention::Standard
            } else {
                KinematicsConvention::AsWritten
            },
        };
        let x = random_state(&mut rng, &p);
        let u = random_input(&mut rng);
        let model: Box<dyn Model> = match fault {
            Some(Fault::Jacobian) => Box::new(Faulty(bicycle)),
            None => Box::new(bicycle),
        };
        let analytic = match model.analytic_jacobians(&x, &u) {
            Some(Ok(j)) => j,
            Some(Err(e)) => {
                failures.push(format!("state {k}: analytic Jacobian failed: {e}; x = {}", fmt_vec(&x)));
                continue;
            }
            None => unreachable!("the bicycle model has analytic Jacobians"),
        };
        let numeric = match central_difference(model.as_ref(), &x, &u) {
            Ok(j) => j,
            Err(e) => {
                failures.push(format!("state {k}: model evaluation failed: {e}; x = {}", fmt_vec(&x)));
                continue;
            }
        };
        for (a, fd, wrt) in [(&analytic.0, &numeric.0, &STATE_NAMES[..]), (&analytic.1, &numeric.1, &INPUT_NAMES[..])] {
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    let err = (a[(r, c)] - fd[(r, c)]).abs() / (1.0 + fd[(r, c)].abs());
                    worst = worst.max(err);
                    if err > JACOBIAN_TOL {
                        failures.push(format!(
                            "state {k}: d f[{}] / d {} (row {r}, col {c}): analytic {:.9e}, central difference {:.9e}, relative error {err:.3e}; x = {}, u = {}",
                            STATE_NAMES[r], wrt[c], a[(r, c)], fd[(r, c)], fmt_vec(&x), fmt_vec(&u)
                        ));
                    }
                }
            }
        }
    }
    (
        format!("100 random states, max relative error {worst:.2e} (tolerance {JACOBIAN_TOL:e})"),
        failures,
    )
}

struct DenseQp {
    h: DMatrix<f64>,
    g: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    gi: DMatrix<f64>,
    hi: DVector<f64>,
}

/// Strictly convex, with an interior point of the inequalities on the equalities.
fn random_qp(rng: &mut ChaCha8Rng) -> DenseQp {
    let n = rng.gen_range(1..=6);
    let n_eq = rng.gen_range(0..=n.min(2)).min(n - 1);
    let n_in = rng.gen_range(0..=8);
    let mut u = || rng.gen_range(-1.0..1.0);
    let m = DMatrix::from_fn(n, n, |_, _| u());
    let h = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| 3.0 * u());
    let z0 = DVector::from_fn(n, |_, _| u());
    let a = DMatrix::from_fn(n_eq, n, |_, _| u());
    let b = &a * &z0;
    let gi = DMatrix::from_fn(n_in, n, |_, _| u());
    let slack = DVector::from_fn(n_in, |_, _| 0.5 * (u() + 1.0));
    let hi = &gi * &z0 + slack;
    DenseQp { h, g, a, b, gi, hi }
}

/// Minimum over all inequality active sets whose KKT point is primal and dual feasible.
fn enumerate_active_sets(qp: &DenseQp) -> Option<DVector<f64>> {
    let (n, ne, ni) = (qp.h.nrows(), qp.a.nrows(), qp.gi.nrows());
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << ni) {
        let active: Vec<usize> = (0..ni).filter(|i| mask & (1 << i) != 0).collect();
        let rows = ne + active.len();
        if rows > n {
            continue;
        }
        let mut c = DMatrix::zeros(rows, n);
        let mut d = DVector::zeros(rows);
        for r in 0..ne {
            c.set_row(r, &qp.a.row(r));
            d[r] = qp.b[r];
        }
        for (j, &r) in active.iter().enumerate() {
            c.set_row(ne + j, &qp.gi.row(r));
            d[ne + j] = qp.hi[r];
        }
        let mut kkt = DMatrix::zeros(n + rows, n + rows);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        kkt.view_mut((n, 0), (rows, n)).copy_from(&c);
        kkt.view_mut((0, n), (n, rows)).copy_from(&c.transpose());
        let mut rhs = DVector::zeros(n + rows);
        rhs.rows_mut(0, n).copy_from(&-&qp.g);
        rhs.rows_mut(n, rows).copy_from(&d);
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if !sol.iter().all(|v| v.is_finite()) {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        let feasible = (&qp.gi * &z - &qp.hi).iter().all(|v| *v <= 1e-9);
        let dual_ok = (0..active.len()).all(|j| sol[n + ne + j] >= -1e-9);
        if feasible && dual_ok {
            let f = 0.5 * z.dot(&(&qp.h * &z)) + qp.g.dot(&z);
            if best.as_ref().map_or(true, |(_, bf)| f < *bf) {
                best = Some((z, f));
            }
        }
    }
    best.map(|(z, _)| z)
}

fn qp(seed: u64) -> (String, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = QpSettings::default();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..100 {
        let d = random_qp(&mut rng);
        let Some(reference) = enumerate_active_sets(&d) else {
            failures.push(format!("qp {k}: no active set satisfies the optimality conditions"));
            continue;
        };
        let problem = match QpProblem::from_dense(&d.h, d.g.clone(), &d.a, d.b.clone(), &d.gi, d.hi.clone()) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("qp {k}: {e}"));
                continue;
            }
        };
        let sol = solve_qp(&problem, &settings, None);
        let err = (&sol.primal - &reference).amax();
        worst = worst.max(err);
        if !sol.is_solved() || err > QP_TOL {
            let mut msg = format!(
                "qp {k}: status {}, primal error {err:.3e}\n  H = {}\n  g = {}\n  A = {}\n  b = {}\n  G = {}\n  h = {}",
                sol.status.as_str(),
                d.h,
                fmt_vec(&d.g),
                d.a,
                fmt_vec(&d.b),
                d.gi,
                fmt_vec(&d.hi)
            );
            let _ = write!(msg, "  solver z = {}\n  reference z = {}", fmt_vec(&sol.primal), fmt_vec(&reference));
            failures.push(msg);
        }
    }
    (
        format!("100 random QPs vs active-set enumeration, max primal error {worst:.2e} (tolerance {QP_TOL:e})"),
        failures,
    )
}

fn implicit_euler(seed: u64) -> (String, Vec<String>) {
    let p = VehicleParams::default();
    let model = BicycleModel::new(p);
    let newton = NewtonSettings::default();
    let dt = 0.04;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..200 {
        let x0 = random_state(&mut rng, &p);
        let u = random_input(&mut rng);
        let outcome = implicit_euler_step(&model, &x0, &u, dt, &newton)
            .and_then(|x1| Ok(implicit_residual(&model, &x1, &x0, &u, dt)?));
        match outcome {
            Ok(r) => {
                worst = worst.max(r.amax());
                if r.amax() > RESIDUAL_TOL {
                    failures.push(format!(
                        "step {k}: residual {:.3e}; x0 = {}, u = {}",
                        r.amax(),
                        fmt_vec(&x0),
                        fmt_vec(&u)
                    ));
                }
            }
            Err(e) => failures.push(format!("step {k}: {e}; x0 = {}, u = {}", fmt_vec(&x0), fmt_vec(&u))),
        }
    }
    let decay = LinearModel {
        a: DMatrix::from_element(1, 1, -100.0),
        b: DMatrix::zeros(1, 1),
    };
    let one = DVector::from_element(1, 1.0);
    let zero = DVector::zeros(1);
    match implicit_euler_step(&decay, &one, &zero, dt, &newton) {
        Ok(x) if (x[0] - 0.2).abs() <= 1e-12 => {}
        Ok(x) => failures.push(format!("x' = -100x from 1 over 0.04 s: implicit step gave {}, expected 0.2", x[0])),
        Err(e) => failures.push(format!("x' = -100x: {e}")),
    }
    let explicit = one[0] + dt * -100.0 * one[0];
    (
        format!(
            "200 random steps, max residual {worst:.2e} (tolerance {RESIDUAL_TOL:e}); x' = -100x: implicit 0.2, explicit {explicit}"
        ),
        failures,
    )
}

fn defect() -> (String, Vec<String>) {
    let scenario = ScenarioConfig {
        duration: 2.0,
        ..ScenarioConfig::nominal()
    };
    let mut run = match ClosedLoop::new(&scenario, ControllerMode::Sqp) {
        Ok(r) => r,
        Err(e) => return ("nominal scenario".into(), vec![e.to_string()]),
    };
    let mut failures = Vec::new();
    let (mut checked, mut worst) = (0usize, 0.0f64);
    let mut k = 0;
    while run.step() {
        k += 1;
        let Some(d) = run.last_decision() else { continue };
        if !d.converged || d.is_fallback() {
            continue;
        }
        checked += 1;
        match dynamics_defect(&run.controller.model, &d.predicted_states, &d.predicted_inputs, scenario.dt) {
            Ok(v) => {
                worst = worst.max(v);
                if v > DEFECT_TOL {
                    failures.push(format!("step {k}: converged SQP plan has dynamics defect {v:.3e}"));
                }
            }
            Err(e) => failures.push(format!("step {k}: {e}")),
        }
    }
    if checked == 0 {
        failures.push("no SQP step converged".into());
    }
    (
        format!("{checked} converged SQP steps, max dynamics defect {worst:.2e} (tolerance {DEFECT_TOL:e})"),
        failures,
    )
}
