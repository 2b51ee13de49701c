use nalgebra::DVector;

use super::problem::{QpProblem, QpSolution};

/// ∞-norm optimality residuals of a primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `‖Hz + g + Aᵀν + Gᵀλ‖∞`
    pub stationarity: f64,
    /// `‖Az − b‖∞`
    pub primal_equality: f64,
    /// `‖max(0, Gz − h)‖∞`
    pub primal_inequality: f64,
    /// `Σ |λ_i|·|h_i − (Gz)_i|`, equal to `λᵀ·slack` when both are nonnegative.
    pub complementarity: f64,
    /// `‖max(0, −λ)‖∞`
    pub dual_feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_equality)
            .max(self.primal_inequality)
            .max(self.complementarity)
            .max(self.dual_feasibility)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

pub fn kkt_residuals(qp: &QpProblem, sol: &QpSolution) -> KktResiduals {
    kkt_residuals_at(qp, &sol.primal, &sol.eq_dual, &sol.ineq_dual)
}

pub fn kkt_residuals_at(
    qp: &QpProblem,
    z: &DVector<f64>,
    eq_dual: &DVector<f64>,
    ineq_dual: &DVector<f64>,
) -> KktResiduals {
    let mut grad = vec![0.0; qp.num_vars()];
    qp.hessian.mul_vec(z.as_slice(), &mut grad);
    for (g, q) in grad.iter_mut().zip(qp.gradient.iter()) {
        *g += q;
    }
    qp.eq_matrix.tr_mul_vec_add(eq_dual.as_slice(), &mut grad);
    qp.ineq_matrix.tr_mul_vec_add(ineq_dual.as_slice(), &mut grad);

    let mut az = vec![0.0; qp.num_eq()];
    qp.eq_matrix.mul_vec(z.as_slice(), &mut az);
    let mut gz = vec![0.0; qp.num_ineq()];
    qp.ineq_matrix.mul_vec(z.as_slice(), &mut gz);

    let inf_norm = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));
    KktResiduals {
        stationarity: inf_norm(&mut grad.iter().copied()),
        primal_equality: inf_norm(&mut az.iter().zip(qp.eq_rhs.iter()).map(|(a, b)| a - b)),
        primal_inequality: inf_norm(&mut gz.iter().zip(qp.ineq_rhs.iter()).map(|(a, h)| (a - h).max(0.0))),
        complementarity: gz
            .iter()
            .zip(qp.ineq_rhs.iter())
            .zip(ineq_dual.iter())
            .map(|((a, h), l)| (l * (h - a)).abs())
            .sum(),
        dual_feasibility: inf_norm(&mut ineq_dual.iter().map(|l| (-l).max(0.0))),
    }
}
