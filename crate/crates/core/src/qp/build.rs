//! Assembly of the stage-structured deviation QP around a guess trajectory.

use nalgebra::DVector;

use super::problem::{CostWeights, QpProblem, StageLayout};
use super::sparse::CsrMatrix;
use super::QpError;
use crate::constraints::ConstraintLinearization;
use crate::discretize::StageJacobians;

/// Everything the builder needs at one sampling instant.
///
/// `stages[i]` and `constraints[i]` linearize stage `i + 1`, i.e. the pair
/// `(x_{i+1}, u_i)`.
#[derive(Debug, Clone, Copy)]
pub struct QpInputs<'a> {
    pub state_guess: &'a [DVector<f64>],
    pub input_guess: &'a [DVector<f64>],
    pub reference: &'a [DVector<f64>],
    pub measured_state: &'a DVector<f64>,
    /// Input in force over the current sampling period.
    pub last_input: &'a DVector<f64>,
    pub weights: &'a CostWeights,
    pub stages: &'a [StageJacobians],
    pub constraints: &'a [ConstraintLinearization],
}

fn expect_len(what: &'static str, found: usize, expected: usize) -> Result<(), QpError> {
    if found == expected {
        Ok(())
    } else {
        Err(QpError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

fn finite(what: &'static str, values: impl IntoIterator<Item = f64>) -> Result<(), QpError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(QpError::NonFinite { what })
    }
}

impl QpInputs<'_> {
    fn validate(&self) -> Result<StageLayout, QpError> {
        let horizon = self.input_guess.len();
        if horizon < 2 {
            return Err(QpError::HorizonTooShort(horizon));
        }
        let n = self.measured_state.len();
        let m = self.last_input.len();
        expect_len("state guess length", self.state_guess.len(), horizon + 1)?;
        expect_len("reference length", self.reference.len(), horizon + 1)?;
        expect_len("stage linearizations", self.stages.len(), horizon)?;
        expect_len("constraint linearizations", self.constraints.len(), horizon)?;
        self.weights.validate(n, m)?;
        for x in self.state_guess {
            expect_len("state dimension", x.len(), n)?;
        }
        for u in self.input_guess {
            expect_len("input dimension", u.len(), m)?;
        }
        for r in self.reference {
            expect_len("reference dimension", r.len(), self.weights.outputs.len())?;
        }
        for s in self.stages {
            expect_len("A0 rows", s.a0.nrows(), n)?;
            expect_len("A1 rows", s.a1.nrows(), n)?;
            expect_len("A1 cols", s.a1.ncols(), n)?;
            expect_len("B rows", s.b.nrows(), n)?;
            expect_len("B cols", s.b.ncols(), m)?;
            expect_len("F_g length", s.f_g.len(), n)?;
            finite("stage linearization", s.a0.iter().chain(s.a1.iter()).chain(s.b.iter()).chain(s.f_g.iter()).copied())?;
        }
        for c in self.constraints {
            expect_len("D rows", c.d.nrows(), c.rows())?;
            expect_len("E rows", c.e.nrows(), c.rows())?;
            if c.rows() > 0 {
                expect_len("D cols", c.d.ncols(), n)?;
                expect_len("E cols", c.e.ncols(), m)?;
            }
            finite("constraint linearization", c.g.iter().chain(c.d.iter()).chain(c.e.iter()).copied())?;
        }
        finite(
            "guess",
            self.state_guess
                .iter()
                .chain(self.input_guess)
                .chain(self.reference)
                .chain([self.measured_state, self.last_input])
                .flat_map(|v| v.iter().copied()),
        )?;
        Ok(StageLayout {
            state_dim: n,
            input_dim: m,
            horizon,
        })
    }
}

/// Builds the deviation QP in the variables `[δx_0 … δx_N, δu_0 … δu_{N-1}]`.
///
/// Cost: `Σ_i ‖r_i − C(x_g,i + δx_i)‖²_Q + Σ_i ‖Δu_g,i + δΔu_i‖²_R` with
/// `Δu_0 = u_0 − u_l`. Equalities, in row order: `δx_0 = x_m − x_g,0`,
/// `δu_0 = u_l − u_g,0`, `δu_{N-1} − δu_{N-2} = u_g,N-2 − u_g,N-1`, then
/// `(I − A1)δx_i − A0 δx_{i-1} − B δu_{i-1} = F_g,i − x_g,i` for each stage.
/// Inequalities: `D_i δx_i + E_i δu_{i-1} ≤ −G_g,i` for `i = 1..N`.
pub fn build_qp(inputs: &QpInputs<'_>) -> Result<QpProblem, QpError> {
    let layout = inputs.validate()?;
    let StageLayout {
        state_dim: n,
        input_dim: m,
        horizon,
    } = layout;
    let nv = layout.num_vars();
    let w = inputs.weights;
    let q = w.output_scale();
    let r = w.input_scale();

    let mut hess = Vec::new();
    let mut grad = DVector::zeros(nv);
    for stage in 0..=horizon {
        let x = &inputs.state_guess[stage];
        let reference = &inputs.reference[stage];
        for (k, &idx) in w.outputs.iter().enumerate() {
            let col = layout.state_offset(stage) + idx;
            hess.push((col, col, 2.0 * q[k]));
            grad[col] -= 2.0 * q[k] * (reference[k] - x[idx]);
        }
    }
    for stage in 0..horizon {
        let u = &inputs.input_guess[stage];
        let prev = if stage == 0 {
            inputs.last_input
        } else {
            &inputs.input_guess[stage - 1]
        };
        for c in 0..m {
            let increment = u[c] - prev[c];
            let cur = layout.input_offset(stage) + c;
            hess.push((cur, cur, 2.0 * r[c]));
            grad[cur] += 2.0 * r[c] * increment;
            if stage > 0 {
                let before = layout.input_offset(stage - 1) + c;
                hess.push((before, before, 2.0 * r[c]));
                hess.push((cur, before, -2.0 * r[c]));
                hess.push((before, cur, -2.0 * r[c]));
                grad[before] -= 2.0 * r[c] * increment;
            }
        }
    }

    let n_eq = layout.num_equalities();
    let mut eq = Vec::new();
    let mut eq_rhs = DVector::zeros(n_eq);
    let mut row = 0;
    for i in 0..n {
        eq.push((row, layout.state_offset(0) + i, 1.0));
        eq_rhs[row] = inputs.measured_state[i] - inputs.state_guess[0][i];
        row += 1;
    }
    for c in 0..m {
        eq.push((row, layout.input_offset(0) + c, 1.0));
        eq_rhs[row] = inputs.last_input[c] - inputs.input_guess[0][c];
        row += 1;
    }
    for c in 0..m {
        eq.push((row, layout.input_offset(horizon - 1) + c, 1.0));
        eq.push((row, layout.input_offset(horizon - 2) + c, -1.0));
        eq_rhs[row] = inputs.input_guess[horizon - 2][c] - inputs.input_guess[horizon - 1][c];
        row += 1;
    }
    for (k, lin) in inputs.stages.iter().enumerate() {
        let stage = k + 1;
        let xs = layout.state_offset(stage);
        let xp = layout.state_offset(stage - 1);
        let us = layout.input_offset(stage - 1);
        for i in 0..n {
            for j in 0..n {
                let identity = if i == j { 1.0 } else { 0.0 };
                eq.push((row + i, xs + j, identity - lin.a1[(i, j)]));
                eq.push((row + i, xp + j, -lin.a0[(i, j)]));
            }
            for j in 0..m {
                eq.push((row + i, us + j, -lin.b[(i, j)]));
            }
            eq_rhs[row + i] = lin.f_g[i] - inputs.state_guess[stage][i];
        }
        row += n;
    }
    assert_eq!(row, n_eq, "equality row count");

    let n_ineq: usize = inputs.constraints.iter().map(|c| c.rows()).sum();
    let mut ineq = Vec::new();
    let mut ineq_rhs = DVector::zeros(n_ineq);
    let mut row = 0;
    for (k, lin) in inputs.constraints.iter().enumerate() {
        let xs = layout.state_offset(k + 1);
        let us = layout.input_offset(k);
        for i in 0..lin.rows() {
            for j in 0..n {
                ineq.push((row, xs + j, lin.d[(i, j)]));
            }
            for j in 0..m {
                ineq.push((row, us + j, lin.e[(i, j)]));
            }
            ineq_rhs[row] = -lin.g[i];
            row += 1;
        }
    }

    let qp = QpProblem {
        hessian: CsrMatrix::from_triplets(nv, nv, &hess),
        gradient: grad,
        eq_matrix: CsrMatrix::from_triplets(n_eq, nv, &eq),
        eq_rhs,
        ineq_matrix: CsrMatrix::from_triplets(n_ineq, nv, &ineq),
        ineq_rhs,
        layout: Some(layout),
    };
    qp.check()?;
    Ok(qp)
}
