mod common;

use common::linear::{double_integrator_weights, LinearModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rti_nmpc::constraints::ConstraintLinearization;
use rti_nmpc::discretize::{implicit_euler_step, step_jacobians, NewtonSettings, StageJacobians};
use rti_nmpc::qp::{
    build_qp, kkt_residuals_at, read_qp_dump, solve_qp, write_qp_dump, CostWeights, QpError, QpInputs, QpProblem,
    QpSettings,
};

/// Owned inputs for one assembled problem.
struct Case {
    xg: Vec<DVector<f64>>,
    ug: Vec<DVector<f64>>,
    r: Vec<DVector<f64>>,
    xm: DVector<f64>,
    ul: DVector<f64>,
    w: CostWeights,
    stages: Vec<StageJacobians>,
    cons: Vec<ConstraintLinearization>,
}

impl Case {
    fn inputs(&self) -> QpInputs<'_> {
        QpInputs {
            state_guess: &self.xg,
            input_guess: &self.ug,
            reference: &self.r,
            measured_state: &self.xm,
            last_input: &self.ul,
            weights: &self.w,
            stages: &self.stages,
            constraints: &self.cons,
        }
    }

    fn build(&self) -> QpProblem {
        build_qp(&self.inputs()).unwrap()
    }
}

fn vec_of(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0))
}

fn mat_of(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_case(seed: u64, n: usize, m: usize, horizon: usize, rows: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = n.min(2);
    let w = CostWeights {
        outputs: (0..k).collect(),
        output_weights: (0..k).map(|_| rng.gen_range(0.1..3.0)).collect(),
        output_ranges: (0..k).map(|_| rng.gen_range(0.5..4.0)).collect(),
        input_weights: (0..m).map(|_| rng.gen_range(0.1..3.0)).collect(),
        input_ranges: (0..m).map(|_| rng.gen_range(0.5..4.0)).collect(),
    };
    let xg = (0..=horizon).map(|_| vec_of(&mut rng, n)).collect();
    let ug = (0..horizon).map(|_| vec_of(&mut rng, m)).collect();
    let r = (0..=horizon).map(|_| vec_of(&mut rng, k)).collect();
    let stages = (0..horizon)
        .map(|_| StageJacobians {
            a0: mat_of(&mut rng, n, n),
            a1: mat_of(&mut rng, n, n) * 0.1,
            b: mat_of(&mut rng, n, m),
            f_g: vec_of(&mut rng, n),
        })
        .collect();
    let cons = (0..horizon)
        .map(|_| ConstraintLinearization {
            g: vec_of(&mut rng, rows),
            d: mat_of(&mut rng, rows, n),
            e: mat_of(&mut rng, rows, m),
        })
        .collect();
    Case {
        xm: vec_of(&mut rng, n),
        ul: vec_of(&mut rng, m),
        xg,
        ug,
        r,
        w,
        stages,
        cons,
    }
}

/// The deviation QP written as stacked dense matrices:
/// `H = 2 blkdiag(CᵀQC) ⊕ 2 SᵀRS`, `g = −2 C̄ᵀQ̄(r − C̄x_g) ⊕ 2 SᵀR(S u_g − e u_l)`.
fn literal_dense(c: &Case) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let n = c.xm.len();
    let m = c.ul.len();
    let horizon = c.ug.len();
    let k = c.w.outputs.len();
    let nx = (horizon + 1) * n;
    let nu = horizon * m;
    let nv = nx + nu;

    let out = c.w.output_matrix(n);
    let mut big_c = DMatrix::zeros((horizon + 1) * k, nx);
    let mut big_q = DMatrix::zeros((horizon + 1) * k, (horizon + 1) * k);
    let mut r_stack = DVector::zeros((horizon + 1) * k);
    let mut x_stack = DVector::zeros(nx);
    for i in 0..=horizon {
        big_c.view_mut((i * k, i * n), (k, n)).copy_from(&out);
        for j in 0..k {
            big_q[(i * k + j, i * k + j)] = c.w.output_scale()[j];
        }
        r_stack.rows_mut(i * k, k).copy_from(&c.r[i]);
        x_stack.rows_mut(i * n, n).copy_from(&c.xg[i]);
    }
    let mut s = DMatrix::zeros(nu, nu);
    let mut big_r = DMatrix::zeros(nu, nu);
    let mut u_stack = DVector::zeros(nu);
    let mut anchor = DVector::zeros(nu);
    for i in 0..horizon {
        for j in 0..m {
            s[(i * m + j, i * m + j)] = 1.0;
            if i > 0 {
                s[(i * m + j, (i - 1) * m + j)] = -1.0;
            }
            big_r[(i * m + j, i * m + j)] = c.w.input_scale()[j];
        }
        u_stack.rows_mut(i * m, m).copy_from(&c.ug[i]);
    }
    anchor.rows_mut(0, m).copy_from(&c.ul);

    let mut h = DMatrix::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    h.view_mut((0, 0), (nx, nx))
        .copy_from(&(big_c.transpose() * &big_q * &big_c * 2.0));
    h.view_mut((nx, nx), (nu, nu)).copy_from(&(s.transpose() * &big_r * &s * 2.0));
    g.rows_mut(0, nx)
        .copy_from(&(big_c.transpose() * &big_q * (&r_stack - &big_c * &x_stack) * -2.0));
    g.rows_mut(nx, nu)
        .copy_from(&(s.transpose() * &big_r * (&s * &u_stack - &anchor) * 2.0));

    let ne = n * (horizon + 1) + 2 * m;
    let mut a = DMatrix::zeros(ne, nv);
    let mut b = DVector::zeros(ne);
    a.view_mut((0, 0), (n, n)).fill_with_identity();
    b.rows_mut(0, n).copy_from(&(&c.xm - &c.xg[0]));
    a.view_mut((n, nx), (m, m)).fill_with_identity();
    b.rows_mut(n, m).copy_from(&(&c.ul - &c.ug[0]));
    let hold = n + m;
    a.view_mut((hold, nx + (horizon - 1) * m), (m, m)).fill_with_identity();
    a.view_mut((hold, nx + (horizon - 2) * m), (m, m))
        .copy_from(&(-DMatrix::<f64>::identity(m, m)));
    b.rows_mut(hold, m).copy_from(&(&c.ug[horizon - 2] - &c.ug[horizon - 1]));
    for i in 1..=horizon {
        let row = n + 2 * m + (i - 1) * n;
        let st = &c.stages[i - 1];
        a.view_mut((row, i * n), (n, n))
            .copy_from(&(DMatrix::identity(n, n) - &st.a1));
        a.view_mut((row, (i - 1) * n), (n, n)).copy_from(&(-&st.a0));
        a.view_mut((row, nx + (i - 1) * m), (n, m)).copy_from(&(-&st.b));
        b.rows_mut(row, n).copy_from(&(&st.f_g - &c.xg[i]));
    }

    let ni: usize = c.cons.iter().map(|l| l.rows()).sum();
    let mut gi = DMatrix::zeros(ni, nv);
    let mut hi = DVector::zeros(ni);
    let mut row = 0;
    for (i, l) in c.cons.iter().enumerate() {
        let rows = l.rows();
        gi.view_mut((row, (i + 1) * n), (rows, n)).copy_from(&l.d);
        gi.view_mut((row, nx + i * m), (rows, m)).copy_from(&l.e);
        hi.rows_mut(row, rows).copy_from(&(-&l.g));
        row += rows;
    }
    (h, g, a, b, gi, hi)
}

#[test]
fn builder_equals_literal_dense_transcription() {
    for seed in 0..30 {
        for horizon in 2..=3 {
            let c = random_case(seed, 3, 2, horizon, 2);
            let qp = c.build();
            let (h, g, a, b, gi, hi) = literal_dense(&c);
            assert_eq!(qp.hessian.to_dense(), h, "seed {seed} N {horizon}: H");
            assert_eq!(qp.gradient, g, "seed {seed} N {horizon}: g");
            assert_eq!(qp.eq_matrix.to_dense(), a, "seed {seed} N {horizon}: A");
            assert_eq!(qp.eq_rhs, b, "seed {seed} N {horizon}: b");
            assert_eq!(qp.ineq_matrix.to_dense(), gi, "seed {seed} N {horizon}: G");
            assert_eq!(qp.ineq_rhs, hi, "seed {seed} N {horizon}: h");
        }
    }
}

#[test]
fn scalar_two_stage_problem_matches_hand_expansion() {
    let (a, bb, dt) = (-0.7, 1.3, 0.1);
    let model = LinearModel {
        a: DMatrix::from_element(1, 1, a),
        b: DMatrix::from_element(1, 1, bb),
    };
    let w = CostWeights {
        outputs: vec![0],
        output_weights: vec![2.0],
        output_ranges: vec![0.5],
        input_weights: vec![5.0],
        input_ranges: vec![2.0],
    };
    let s1 = |v: f64| DVector::from_element(1, v);
    let xg = vec![s1(0.3), s1(0.1), s1(-0.2)];
    let ug = vec![s1(0.4), s1(-0.6)];
    let r = vec![s1(1.0), s1(0.5), s1(0.25)];
    let (xm, ul) = (s1(0.35), s1(0.45));
    let stages: Vec<_> = (0..2)
        .map(|i| step_jacobians(&model, &xg[i + 1], &xg[i], &ug[i], dt).unwrap())
        .collect();
    let cons: Vec<_> = [(0.8, -0.4, 0.1), (-0.3, 0.9, -0.2)]
        .iter()
        .map(|&(d, e, g)| ConstraintLinearization {
            g: s1(g),
            d: DMatrix::from_element(1, 1, d),
            e: DMatrix::from_element(1, 1, e),
        })
        .collect();
    let c = Case { xg: xg.clone(), ug: ug.clone(), r: r.clone(), xm: xm.clone(), ul: ul.clone(), w, stages, cons };
    let qp = c.build();

    // Variables [δx0, δx1, δx2, δu0, δu1]; cost coded directly on absolute values.
    let (q, rr) = (2.0 / 0.25, 5.0 / 4.0);
    let cost = |z: &[f64; 5]| {
        let x = [xg[0][0] + z[0], xg[1][0] + z[1], xg[2][0] + z[2]];
        let u = [ug[0][0] + z[3], ug[1][0] + z[4]];
        let tracking: f64 = (0..3).map(|i| q * (r[i][0] - x[i]).powi(2)).sum();
        tracking + rr * (u[0] - ul[0]).powi(2) + rr * (u[1] - u[0]).powi(2)
    };
    let unit = |i: usize, s: f64| {
        let mut z = [0.0; 5];
        z[i] = s;
        z
    };
    let zero = cost(&[0.0; 5]);
    let h = qp.hessian.to_dense();
    for i in 0..5 {
        let gi = (cost(&unit(i, 1.0)) - cost(&unit(i, -1.0))) / 2.0;
        assert!((qp.gradient[i] - gi).abs() <= 1e-12 * (1.0 + gi.abs()), "g[{i}]");
        for j in 0..5 {
            let mut both = unit(i, 1.0);
            both[j] += 1.0;
            let hij = cost(&both) - cost(&unit(i, 1.0)) - cost(&unit(j, 1.0)) + zero;
            assert!((h[(i, j)] - hij).abs() <= 1e-12 * (1.0 + hij.abs()), "H[{i},{j}]");
        }
    }

    let f1 = xg[0][0] + dt * (a * xg[1][0] + bb * ug[0][0]);
    let f2 = xg[1][0] + dt * (a * xg[2][0] + bb * ug[1][0]);
    let eq = DMatrix::from_row_slice(
        5,
        5,
        &[
            1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, -1.0, 1.0, //
            -1.0, 1.0 - a * dt, 0.0, -bb * dt, 0.0, //
            0.0, -1.0, 1.0 - a * dt, 0.0, -bb * dt,
        ],
    );
    let rhs = [xm[0] - xg[0][0], ul[0] - ug[0][0], ug[0][0] - ug[1][0], f1 - xg[1][0], f2 - xg[2][0]];
    assert!((qp.eq_matrix.to_dense() - eq).amax() <= 1e-15);
    for (k, v) in rhs.iter().enumerate() {
        assert!((qp.eq_rhs[k] - v).abs() <= 1e-15, "b[{k}]");
    }
    let ineq = DMatrix::from_row_slice(2, 5, &[0.0, 0.8, 0.0, -0.4, 0.0, 0.0, 0.0, -0.3, 0.0, 0.9]);
    assert_eq!(qp.ineq_matrix.to_dense(), ineq);
    assert_eq!(qp.ineq_rhs.as_slice(), &[-0.1, 0.2]);
}

#[test]
fn residual_free_guess_gives_zero_state_gradient_and_dynamics_rhs() {
    let model = LinearModel::double_integrator();
    let dt = 0.1;
    let horizon = 6;
    let w = double_integrator_weights();
    let u = DVector::from_element(1, 0.5);
    let mut xg = vec![DVector::from_vec(vec![0.2, -1.0])];
    for i in 0..horizon {
        let next = implicit_euler_step(&model, &xg[i], &u, dt, &NewtonSettings::default()).unwrap();
        xg.push(next);
    }
    let ug = vec![u.clone(); horizon];
    let r: Vec<_> = xg.iter().map(|x| w.output_matrix(2) * x).collect();
    let stages: Vec<_> = (0..horizon)
        .map(|i| step_jacobians(&model, &xg[i + 1], &xg[i], &ug[i], dt).unwrap())
        .collect();
    let c = Case {
        xm: xg[0].clone(),
        ul: u.clone(),
        xg,
        ug,
        r,
        w,
        stages,
        cons: vec![ConstraintLinearization::empty(2, 1); horizon],
    };
    let qp = c.build();
    let nx = (horizon + 1) * 2;
    assert!(qp.gradient.rows(0, nx).amax() <= 1e-12);
    assert!(qp.gradient.amax() <= 1e-12);
    assert!(qp.eq_rhs.amax() <= 1e-12, "{}", qp.eq_rhs);
}

#[test]
fn doubling_output_weights_doubles_the_state_blocks() {
    let base = random_case(5, 4, 2, 3, 1);
    let mut doubled = random_case(5, 4, 2, 3, 1);
    for v in &mut doubled.w.output_weights {
        *v *= 2.0;
    }
    let (a, b) = (base.build(), doubled.build());
    let nx = 4 * 4;
    let (ha, hb) = (a.hessian.to_dense(), b.hessian.to_dense());
    assert_eq!(hb.view((0, 0), (nx, nx)), ha.view((0, 0), (nx, nx)) * 2.0);
    assert_eq!(b.gradient.rows(0, nx), a.gradient.rows(0, nx) * 2.0);
    assert_eq!(hb.view((nx, nx), (6, 6)), ha.view((nx, nx), (6, 6)));
    assert_eq!(b.gradient.rows(nx, 6), a.gradient.rows(nx, 6));
}

#[test]
fn builder_rejects_bad_inputs() {
    let mut c = random_case(1, 2, 1, 3, 1);
    c.r.pop();
    assert!(matches!(build_qp(&c.inputs()), Err(QpError::DimensionMismatch { .. })));

    let mut c = random_case(1, 2, 1, 3, 1);
    c.stages[1].a1[(0, 1)] = f64::NAN;
    assert!(matches!(build_qp(&c.inputs()), Err(QpError::NonFinite { .. })));

    let mut c = random_case(1, 2, 1, 3, 1);
    c.w.output_ranges[0] = 0.0;
    assert!(build_qp(&c.inputs()).is_err());

    let c = random_case(1, 2, 1, 1, 1);
    assert!(matches!(build_qp(&c.inputs()), Err(QpError::HorizonTooShort(1))));
}

fn scalar(h: f64, g: f64, gi: Option<(f64, f64)>) -> QpProblem {
    let (gm, hv) = match gi {
        Some((a, b)) => (DMatrix::from_element(1, 1, a), DVector::from_element(1, b)),
        None => (DMatrix::zeros(0, 1), DVector::zeros(0)),
    };
    QpProblem::from_dense(
        &DMatrix::from_element(1, 1, h),
        DVector::from_element(1, g),
        &DMatrix::zeros(0, 1),
        DVector::zeros(0),
        &gm,
        hv,
    )
    .unwrap()
}

#[test]
fn scalar_problems_solve_to_their_closed_forms() {
    let settings = QpSettings::default();
    let free = solve_qp(&scalar(2.0, -2.0, None), &settings, None);
    assert!(free.is_solved());
    assert!((free.primal[0] - 1.0).abs() <= 1e-6);

    let bounded = solve_qp(&scalar(2.0, 0.0, Some((-1.0, -1.0))), &settings, None);
    assert!(bounded.is_solved());
    assert!((bounded.primal[0] - 1.0).abs() <= 1e-6);
    assert!((bounded.ineq_dual[0] - 2.0).abs() <= 1e-6);
}

#[test]
fn kkt_residuals_of_a_hand_built_pair() {
    let qp = scalar(2.0, 0.0, Some((-1.0, -1.0)));
    let none = DVector::zeros(0);
    let lambda = DVector::from_element(1, 2.0);
    let exact = kkt_residuals_at(&qp, &DVector::from_element(1, 1.0), &none, &lambda);
    assert!(exact.within(1e-12), "{exact:?}");
    let moved = kkt_residuals_at(&qp, &DVector::from_element(1, 1.001), &none, &lambda);
    assert!((moved.stationarity - 2e-3).abs() <= 1e-12, "{moved:?}");
}

#[test]
fn dump_round_trips() {
    let qp = random_case(9, 3, 2, 3, 2).build();
    let mut buf = Vec::new();
    write_qp_dump(&qp, &mut buf).unwrap();
    let back = read_qp_dump(buf.as_slice()).unwrap();
    assert_eq!(back.hessian.to_dense(), qp.hessian.to_dense());
    assert_eq!(back.gradient, qp.gradient);
    assert_eq!(back.eq_matrix.to_dense(), qp.eq_matrix.to_dense());
    assert_eq!(back.eq_rhs, qp.eq_rhs);
    assert_eq!(back.ineq_matrix.to_dense(), qp.ineq_matrix.to_dense());
    assert_eq!(back.ineq_rhs, qp.ineq_rhs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hessian_is_symmetric_positive_semidefinite(seed in 0u64..10_000, horizon in 2usize..6) {
        let qp = random_case(seed, 3, 2, horizon, 1).build();
        let h = qp.hessian.to_dense();
        prop_assert_eq!(&h, &h.transpose());
        let smallest = h.symmetric_eigenvalues().min();
        prop_assert!(smallest >= -1e-12, "{}", smallest);
    }

    #[test]
    fn shifting_position_shifts_the_unconstrained_optimum(seed in 0u64..10_000, shift in -3.0f64..3.0) {
        let model = LinearModel::double_integrator();
        let dt = 0.1;
        let horizon = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = double_integrator_weights();
        let xm = vec_of(&mut rng, 2);
        let ul = vec_of(&mut rng, 1);
        let r: Vec<_> = (0..=horizon).map(|_| vec_of(&mut rng, 2)).collect();
        let solve = |offset: f64| {
            let delta = DVector::from_vec(vec![offset, 0.0]);
            let xg = vec![&xm + &delta; horizon + 1];
            let ug = vec![ul.clone(); horizon];
            let stages: Vec<_> = (0..horizon)
                .map(|i| step_jacobians(&model, &xg[i + 1], &xg[i], &ug[i], dt).unwrap())
                .collect();
            let c = Case {
                xm: &xm + &delta,
                ul: ul.clone(),
                r: r.iter().map(|v| v + w.output_matrix(2) * &delta).collect(),
                xg,
                ug,
                w: w.clone(),
                stages,
                cons: vec![ConstraintLinearization::empty(2, 1); horizon],
            };
            let qp = c.build();
            let sol = solve_qp(&qp, &QpSettings::default(), None);
            assert!(sol.is_solved());
            let layout = qp.layout.unwrap();
            let states: Vec<_> = (0..=horizon).map(|i| &c.xg[i] + layout.state(&sol.primal, i)).collect();
            let inputs: Vec<_> = (0..horizon).map(|i| &c.ug[i] + layout.input(&sol.primal, i)).collect();
            (states, inputs)
        };
        let (xa, ua) = solve(0.0);
        let (xb, ub) = solve(shift);
        for i in 0..=horizon {
            prop_assert!((xb[i][0] - xa[i][0] - shift).abs() <= 1e-5);
            prop_assert!((xb[i][1] - xa[i][1]).abs() <= 1e-5);
        }
        for i in 0..horizon {
            prop_assert!((ub[i][0] - ua[i][0]).abs() <= 1e-5);
        }
    }
}
