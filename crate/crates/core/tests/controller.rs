mod common;

use common::linear::{dense_tracking_optimum, double_integrator_weights, LinearModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rti_nmpc::constraints::{StageConstraints, Unconstrained};
use rti_nmpc::controller::{
    dynamics_defect, initialize_controller, reference_window, shift_guess, ControlDecision, Controller,
    ControllerConfig, ControllerError, ControllerMode, GuessUpdate,
};
use rti_nmpc::discretize::{Model, NewtonSettings};
use rti_nmpc::qp::{CostWeights, QpStatus};
use rti_nmpc::sim::{ClosedLoop, ScenarioConfig, Trajectory};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn linear_controller(
    model: LinearModel,
    weights: CostWeights,
    horizon: usize,
    dt: f64,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
) -> Controller<LinearModel, Unconstrained> {
    let free = Unconstrained {
        state_dim: model.state_dim(),
        input_dim: model.input_dim(),
    };
    Controller::new(model, free, ControllerConfig::new(horizon, dt, weights), x0, u0).unwrap()
}

/// A damped two-state system and its equilibrium under a constant input.
fn damped() -> (LinearModel, CostWeights, DVector<f64>, DVector<f64>) {
    let model = LinearModel {
        a: DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    };
    let u = DVector::from_element(1, 0.8);
    let x = -model.a.clone().lu().solve(&(&model.b * &u)).unwrap();
    (model, double_integrator_weights(), x, u)
}

#[test]
fn one_rti_step_solves_the_linear_problem_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (dt, horizon) = (0.1, 12);
    for _ in 0..10 {
        let model = LinearModel::double_integrator();
        let w = double_integrator_weights();
        let x_m = DVector::from_vec(vec![rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)]);
        let u_l = DVector::from_element(1, rng.gen_range(-1.0..1.0));
        let reference: Vec<_> = (0..=horizon)
            .map(|i| DVector::from_vec(vec![0.3 * i as f64 * dt, 0.3]))
            .collect();
        let guess = DVector::from_vec(vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]);
        let (states, inputs) = dense_tracking_optimum(&model, &w, &x_m, &u_l, &reference, dt);

        let mut rti = linear_controller(model.clone(), w.clone(), horizon, dt, &guess, &u_l);
        let a = rti.rti_step(&x_m, &reference).unwrap();
        let mut sqp = linear_controller(model, w, horizon, dt, &guess, &u_l);
        let b = sqp.sqp_solve(&x_m, &reference, 1e-8, 50).unwrap();

        assert_eq!(a.sqp_iterations, 1);
        assert_eq!(b.sqp_iterations, 1);
        assert!(b.converged);
        assert!((&a.input - &inputs[1]).amax() <= 1e-8, "{} vs {}", a.input, inputs[1]);
        assert!((&a.input - &b.input).amax() <= 1e-8);
        for (d, name) in [(&a, "rti"), (&b, "sqp")] {
            for i in 0..=horizon {
                assert!((&d.predicted_states[i] - &states[i]).amax() <= 1e-8, "{name} state {i}");
            }
            for i in 0..horizon {
                assert!((&d.predicted_inputs[i] - &inputs[i]).amax() <= 1e-8, "{name} input {i}");
            }
        }
    }
}

#[test]
fn zero_error_on_a_residual_free_guess_commands_no_change() {
    let (model, w, x_eq, u_eq) = damped();
    let horizon = 8;
    let reference = vec![w.output_matrix(2) * &x_eq; horizon + 1];
    let mut c = linear_controller(model, w, horizon, 0.05, &x_eq, &u_eq);
    let d = c.rti_step(&x_eq, &reference).unwrap();
    assert!((&d.input - &u_eq).amax() <= 1e-9, "{}", d.input);
    for x in &d.predicted_states {
        assert!((x - &x_eq).amax() <= 1e-9);
    }
}

#[test]
fn initialization_repeats_the_measurement() {
    let x0 = DVector::from_vec(vec![1.0, -2.0, 3.0]);
    let u0 = DVector::from_vec(vec![0.5, 0.25]);
    let st = initialize_controller(&x0, &u0, 7, 0.04, ControllerMode::Rti).unwrap();
    assert_eq!(st.state_guess.len(), 8);
    assert_eq!(st.input_guess.len(), 7);
    assert!(st.state_guess.iter().all(|x| x == &x0));
    assert!(st.input_guess.iter().all(|u| u == &u0));
    assert_eq!(st.last_input, u0);
    assert!(initialize_controller(&x0, &u0, 1, 0.04, ControllerMode::Rti).is_err());
    let bad = DVector::from_vec(vec![1.0, f64::NAN, 3.0]);
    assert!(matches!(
        initialize_controller(&bad, &u0, 7, 0.04, ControllerMode::Rti),
        Err(ControllerError::NonFiniteMeasurement)
    ));
}

#[test]
fn shift_keeps_lengths_and_fixes_equilibria() {
    let (model, _, x_eq, u_eq) = damped();
    let mut st = initialize_controller(&x_eq, &u_eq, 6, 0.05, ControllerMode::Rti).unwrap();
    let before = st.clone();
    assert!(!shift_guess(&model, &mut st, &NewtonSettings::default()));
    assert_eq!(st.state_guess.len(), 7);
    assert_eq!(st.input_guess.len(), 6);
    for (a, b) in st.state_guess.iter().zip(&before.state_guess) {
        assert!((a - b).amax() <= 1e-12);
    }
    assert_eq!(st.input_guess, before.input_guess);

    let mut moving = initialize_controller(&DVector::from_vec(vec![1.0, 0.0]), &u_eq, 4, 0.05, ControllerMode::Rti).unwrap();
    moving.state_guess[4] = DVector::from_vec(vec![2.0, 1.0]);
    moving.input_guess[3] = DVector::from_element(1, -0.4);
    shift_guess(&model, &mut moving, &NewtonSettings::default());
    assert_eq!(moving.state_guess[3], DVector::from_vec(vec![2.0, 1.0]));
    assert_eq!(moving.input_guess[3], DVector::from_element(1, -0.4));
    assert_eq!(moving.input_guess[2], DVector::from_element(1, -0.4));
    let last = &moving.state_guess[4];
    let residual = last - &moving.state_guess[3] - model.derivative(last, &moving.input_guess[3]).unwrap() * 0.05;
    assert!(residual.amax() <= 1e-10);
}

#[test]
fn reference_windows_repeat_the_final_point() {
    let pts: Vec<_> = (0..5).map(|i| DVector::from_element(1, i as f64)).collect();
    let w = reference_window(&pts, 3, 4);
    let values: Vec<f64> = w.iter().map(|v| v[0]).collect();
    assert_eq!(values, vec![3.0, 4.0, 4.0, 4.0, 4.0]);
}

#[test]
fn malformed_calls_are_rejected() {
    let (model, w, x_eq, u_eq) = damped();
    let mut c = linear_controller(model, w.clone(), 5, 0.05, &x_eq, &u_eq);
    let short = vec![w.output_matrix(2) * &x_eq; 5];
    assert!(matches!(c.rti_step(&x_eq, &short), Err(ControllerError::ReferenceLength { .. })));
    let full = vec![w.output_matrix(2) * &x_eq; 6];
    assert!(matches!(
        c.rti_step(&DVector::zeros(3), &full),
        Err(ControllerError::MeasurementLength { .. })
    ));
}

/// Reference outputs the harness feeds the controller.
fn reference_outputs(s: &ScenarioConfig) -> Vec<DVector<f64>> {
    Trajectory::new(s.trajectory)
        .unwrap()
        .sample(s.dt, s.steps() + s.horizon + 1)
        .unwrap()
        .iter()
        .map(|r| DVector::from_vec(vec![r.px, r.py, r.speed]))
        .collect()
}

fn short_nominal(seconds: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration: seconds,
        ..ScenarioConfig::nominal()
    }
}

#[test]
fn first_step_steers_toward_the_reference() {
    for offset in [1.0, -1.0] {
        let s = ScenarioConfig {
            initial_offset: offset,
            noise: rti_nmpc::sim::NoiseConfig::silent(),
            ..short_nominal(0.04)
        };
        let mut run = ClosedLoop::new(&s, ControllerMode::Rti).unwrap();
        run.step();
        let d = run.last_decision().unwrap();
        assert_eq!(d.qp_status, QpStatus::Solved);
        assert!(offset * d.input[1] < 0.0, "offset {offset}: steering rate {}", d.input[1]);
        assert!(d.constraint_violation <= 1e-6, "{}", d.constraint_violation);
        assert!(d.friction_violation <= 1e-6);
    }
}

fn nominal_decisions(mode: ControllerMode, configure: impl Fn(&mut ControllerConfig)) -> Vec<ControlDecision> {
    let s = short_nominal(8.0);
    let mut run = ClosedLoop::new(&s, mode).unwrap();
    configure(&mut run.controller.config);
    let mut out = Vec::new();
    while run.step() {
        out.push(run.last_decision().unwrap().clone());
    }
    out.push(run.last_decision().unwrap().clone());
    assert!(run.log.aborted.is_none());
    out
}

#[test]
fn converged_sqp_satisfies_the_dynamics_and_iterates_more_than_once() {
    let s = short_nominal(8.0);
    let mut run = ClosedLoop::new(&s, ControllerMode::Sqp).unwrap();
    let mut iterations = Vec::new();
    while !run.is_done() {
        run.step();
        let d = run.last_decision().unwrap();
        iterations.push(d.sqp_iterations as f64);
        assert!(!d.is_fallback());
        let c = &run.controller;
        let defect = dynamics_defect(&c.model, &d.predicted_states, &d.predicted_inputs, s.dt).unwrap();
        if d.converged {
            assert!(defect <= 1e-8, "defect {defect:e}");
        }
        if d.qp_status == QpStatus::Solved {
            assert!(d.kkt.within(1e-5), "{:?}", d.kkt);
        }
    }
    assert!(median(iterations) >= 2.0);
}

#[test]
fn every_solved_rti_qp_meets_the_kkt_tolerance() {
    let decisions = nominal_decisions(ControllerMode::Rti, |_| {});
    let solved: Vec<_> = decisions.iter().filter(|d| d.qp_status == QpStatus::Solved).collect();
    assert!(solved.len() >= decisions.len() - 2);
    for d in solved {
        assert!(d.kkt.within(1e-5), "{:?}", d.kkt);
    }
}

#[test]
fn shifting_the_guess_lowers_the_initial_defect() {
    let shifted = nominal_decisions(ControllerMode::Rti, |_| {});
    let held = nominal_decisions(ControllerMode::Rti, |c| c.guess_update = GuessUpdate::Hold);
    let a = median(shifted.iter().skip(1).map(|d| d.initial_defect).collect());
    let b = median(held.iter().skip(1).map(|d| d.initial_defect).collect());
    assert!(a <= b, "shifted {a:e} vs held {b:e}");
}

#[test]
fn warm_guess_needs_no_more_qp_iterations_than_a_cold_one() {
    let s = short_nominal(4.0);
    let outputs = reference_outputs(&s);
    let mut run = ClosedLoop::new(&s, ControllerMode::Rti).unwrap();
    let (mut warm, mut cold) = (Vec::new(), Vec::new());
    let mut k = 0;
    while !run.is_done() {
        let before = run.controller.clone();
        run.step();
        if k >= 1 {
            let record = run.log.records.last().unwrap();
            let x_m = record.filtered.to_dvector();
            let window = reference_window(&outputs, k, s.horizon);
            let mut fresh = before.clone();
            fresh.state = initialize_controller(&x_m, &before.state.last_input, s.horizon, s.dt, ControllerMode::Rti).unwrap();
            let d_cold = fresh.rti_step(&x_m, &window).unwrap();
            warm.push(run.last_decision().unwrap().qp_iterations as f64);
            cold.push(d_cold.qp_iterations as f64);
        }
        k += 1;
    }
    let (w, c) = (median(warm), median(cold));
    assert!(w <= c, "warm {w} vs cold {c}");
}

#[test]
fn friction_rows_of_the_emitted_plan_are_feasible() {
    let decisions = nominal_decisions(ControllerMode::Rti, |_| {});
    let c = rti_nmpc::constraints::VehicleConstraints::new(
        rti_nmpc::vehicle::VehicleParams::default(),
        rti_nmpc::constraints::ConstraintLimits::default(),
    );
    assert_eq!(c.friction_rows(), 0..2);
    for d in decisions.iter().filter(|d| !d.is_fallback()) {
        assert!(d.friction_violation <= 1e-6, "{}", d.friction_violation);
        assert!(d.clip_amount <= 1e-9, "{}", d.clip_amount);
    }
}
