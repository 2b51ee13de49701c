//! A linear test model and a dense solve of its full tracking problem.

use nalgebra::{DMatrix, DVector};
use rti_nmpc::discretize::{Model, ModelError};
use rti_nmpc::qp::CostWeights;

/// `ẋ = A x + B u` with constant matrices.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearModel {
    /// Position and velocity driven by an acceleration input.
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

pub fn double_integrator_weights() -> CostWeights {
    CostWeights {
        outputs: vec![0, 1],
        output_weights: vec![1.0, 0.5],
        output_ranges: vec![1.0, 2.0],
        input_weights: vec![5.0],
        input_ranges: vec![4.0],
    }
}

/// Minimizes, over absolute trajectories, the normalized tracking cost
/// `Σ_{i=0..N} Σ_k w_k/ρ_k² (x_i[o_k] − r_i[k])² + Σ_{i<N} Σ_c w_c/ρ_c² (u_i[c] − u_{i−1}[c])²`
/// with `u_{−1} = u_l`, subject to `x_0 = x_m`, `u_0 = u_l`, `u_{N−1} = u_{N−2}`
/// and `x_i = x_{i−1} + Δt (A x_i + B u_{i−1})`, by one dense KKT solve.
/// Returns `(states, inputs)`.
pub fn dense_tracking_optimum(
    model: &LinearModel,
    weights: &CostWeights,
    x_m: &DVector<f64>,
    u_l: &DVector<f64>,
    reference: &[DVector<f64>],
    dt: f64,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = model.state_dim();
    let m = model.input_dim();
    let horizon = reference.len() - 1;
    let nx = (horizon + 1) * n;
    let nv = nx + horizon * m;
    let xi = |i: usize, j: usize| i * n + j;
    let ui = |i: usize, c: usize| nx + i * m + c;

    let mut h = DMatrix::<f64>::zeros(nv, nv);
    let mut g = DVector::<f64>::zeros(nv);
    for i in 0..=horizon {
        for (k, &o) in weights.outputs.iter().enumerate() {
            let q = weights.output_weights[k] / weights.output_ranges[k].powi(2);
            h[(xi(i, o), xi(i, o))] += 2.0 * q;
            g[xi(i, o)] -= 2.0 * q * reference[i][k];
        }
    }
    for i in 0..horizon {
        for c in 0..m {
            let r = weights.input_weights[c] / weights.input_ranges[c].powi(2);
            h[(ui(i, c), ui(i, c))] += 2.0 * r;
            if i == 0 {
                g[ui(0, c)] -= 2.0 * r * u_l[c];
            } else {
                h[(ui(i - 1, c), ui(i - 1, c))] += 2.0 * r;
                h[(ui(i, c), ui(i - 1, c))] -= 2.0 * r;
                h[(ui(i - 1, c), ui(i, c))] -= 2.0 * r;
            }
        }
    }

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for j in 0..n {
        rows.push((vec![(xi(0, j), 1.0)], x_m[j]));
    }
    for c in 0..m {
        rows.push((vec![(ui(0, c), 1.0)], u_l[c]));
        rows.push((vec![(ui(horizon - 1, c), 1.0), (ui(horizon - 2, c), -1.0)], 0.0));
    }
    for i in 1..=horizon {
        for r in 0..n {
            let mut row = vec![(xi(i - 1, r), -1.0)];
            for j in 0..n {
                let identity = if r == j { 1.0 } else { 0.0 };
                row.push((xi(i, j), identity - dt * model.a[(r, j)]));
            }
            for c in 0..m {
                row.push((ui(i - 1, c), -dt * model.b[(r, c)]));
            }
            rows.push((row, 0.0));
        }
    }

    let ne = rows.len();
    let mut kkt = DMatrix::<f64>::zeros(nv + ne, nv + ne);
    let mut rhs = DVector::<f64>::zeros(nv + ne);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
    rhs.rows_mut(0, nv).copy_from(&(-&g));
    for (k, (row, b)) in rows.iter().enumerate() {
        for &(col, v) in row {
            kkt[(nv + k, col)] += v;
            kkt[(col, nv + k)] += v;
        }
        rhs[nv + k] = *b;
    }
    let sol = kkt.lu().solve(&rhs).expect("nonsingular KKT matrix");
    let states = (0..=horizon).map(|i| sol.rows(xi(i, 0), n).into_owned()).collect();
    let inputs = (0..horizon).map(|i| sol.rows(ui(i, 0), m).into_owned()).collect();
    (states, inputs)
}
