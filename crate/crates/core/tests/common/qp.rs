//! Random convex QPs and an exhaustive active-set reference solver.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rti_nmpc::qp::QpProblem;

pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gi: DMatrix<f64>,
    pub hi: DVector<f64>,
}

impl DenseQp {
    pub fn to_problem(&self) -> QpProblem {
        QpProblem::from_dense(&self.h, self.g.clone(), &self.a, self.b.clone(), &self.gi, self.hi.clone()).unwrap()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }
}

/// Strictly convex QP with a known interior-feasible point.
pub fn random_qp(seed: u64) -> DenseQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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

/// Enumerates every inequality active set, solves the KKT system of each and
/// keeps the feasible one with nonnegative multipliers and least cost.
pub fn brute_force_qp(qp: &DenseQp) -> Option<(DVector<f64>, f64)> {
    let n = qp.h.nrows();
    let ne = qp.a.nrows();
    let ni = qp.gi.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << ni) {
        let active: Vec<usize> = (0..ni).filter(|i| mask & (1 << i) != 0).collect();
        let k = ne + active.len();
        if k > n {
            continue;
        }
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        for i in 0..n {
            rhs[i] = -qp.g[i];
        }
        for r in 0..ne {
            for c in 0..n {
                kkt[(n + r, c)] = qp.a[(r, c)];
                kkt[(c, n + r)] = qp.a[(r, c)];
            }
            rhs[n + r] = qp.b[r];
        }
        for (j, &r) in active.iter().enumerate() {
            for c in 0..n {
                kkt[(n + ne + j, c)] = qp.gi[(r, c)];
                kkt[(c, n + ne + j)] = qp.gi[(r, c)];
            }
            rhs[n + ne + j] = qp.hi[r];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if !sol.iter().all(|v| v.is_finite()) {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        let feasible = (&qp.gi * &z - &qp.hi).iter().all(|v| *v <= 1e-9);
        let dual_ok = (0..active.len()).all(|j| sol[n + ne + j] >= -1e-9);
        if feasible && dual_ok {
            let f = qp.objective(&z);
            if best.as_ref().map_or(true, |(_, bf)| f < *bf) {
                best = Some((z, f));
            }
        }
    }
    best
}
