//! Operator-splitting QP solver over the stacked rows `l ≤ [A; G] z ≤ u`,
//! with Ruiz equilibration, adaptive penalty, a primal infeasibility
//! certificate and active-set polishing.

use std::time::Instant;

use nalgebra::DVector;

use super::envelope::{EnvelopeLdl, EnvelopePattern, SymmetricEnvelope};
use super::problem::{QpProblem, QpSolution, QpStatus};
use super::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Tolerance of the primal infeasibility certificate.
    pub eps_infeasible: f64,
    pub max_iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    pub scaling_iterations: usize,
    pub polish: bool,
    /// A polish is also attempted every this many iterations when the
    /// guessed active set changed.
    pub polish_interval: usize,
    pub polish_refinements: usize,
    /// Working-set changes a polish may make before giving up.
    pub polish_corrections: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_infeasible: 1e-5,
            max_iterations: 4000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 25,
            scaling_iterations: 10,
            polish: true,
            polish_interval: 25,
            polish_refinements: 3,
            polish_corrections: 64,
        }
    }
}

/// Primal and dual starting point, in the problem's own units.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub primal: DVector<f64>,
    pub eq_dual: DVector<f64>,
    pub ineq_dual: DVector<f64>,
}

impl From<&QpSolution> for WarmStart {
    fn from(sol: &QpSolution) -> Self {
        Self {
            primal: sol.primal.clone(),
            eq_dual: sol.eq_dual.clone(),
            ineq_dual: sol.ineq_dual.clone(),
        }
    }
}

/// Interchangeable QP backend.
pub trait QpSolver: Sync {
    fn solve(&self, qp: &QpProblem, warm: Option<&WarmStart>) -> QpSolution;
}

impl QpSolver for QpSettings {
    fn solve(&self, qp: &QpProblem, warm: Option<&WarmStart>) -> QpSolution {
        solve_qp(qp, self, warm)
    }
}

const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const POLISH_DELTA: f64 = 1e-9;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn limit_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

/// Equilibrated copy of the problem: `P̄ = cDPD`, `q̄ = cDq`, `Ā = EAD`,
/// `l̄ = El`, `ū = Eu`.
struct Scaled {
    p: CsrMatrix,
    q: Vec<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    n_eq: usize,
}

impl Scaled {
    fn new(qp: &QpProblem, iterations: usize) -> Self {
        let n = qp.num_vars();
        let mut p = qp.hessian.clone();
        let mut q: Vec<f64> = qp.gradient.iter().copied().collect();
        let mut a = CsrMatrix::vstack(&[&qp.eq_matrix, &qp.ineq_matrix]);
        let rows = a.nrows();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; rows];
        let mut c = 1.0;
        for _ in 0..iterations {
            let pn = p.col_norms_inf();
            let an = a.col_norms_inf();
            let dt: Vec<f64> = pn
                .iter()
                .zip(&an)
                .map(|(x, y)| 1.0 / limit_scaling(x.max(*y)).sqrt())
                .collect();
            let et: Vec<f64> = a
                .row_norms_inf()
                .iter()
                .map(|x| 1.0 / limit_scaling(*x).sqrt())
                .collect();
            p.scale(&dt, &dt);
            a.scale(&et, &dt);
            for i in 0..n {
                q[i] *= dt[i];
                d[i] *= dt[i];
            }
            for r in 0..rows {
                e[r] *= et[r];
            }
            let pn = p.col_norms_inf();
            let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let ct = 1.0 / limit_scaling(mean.max(inf_norm(&q)));
            let ones = vec![1.0; n];
            p.scale(&vec![ct; n], &ones);
            q.iter_mut().for_each(|v| *v *= ct);
            c *= ct;
        }
        let n_eq = qp.num_eq();
        let mut l = Vec::with_capacity(rows);
        let mut u = Vec::with_capacity(rows);
        for r in 0..n_eq {
            l.push(qp.eq_rhs[r] * e[r]);
            u.push(qp.eq_rhs[r] * e[r]);
        }
        for k in 0..qp.num_ineq() {
            l.push(f64::NEG_INFINITY);
            u.push(qp.ineq_rhs[k] * e[n_eq + k]);
        }
        Self {
            p,
            q,
            a,
            l,
            u,
            d,
            e,
            c,
            n_eq,
        }
    }

    fn n(&self) -> usize {
        self.q.len()
    }

    fn rows(&self) -> usize {
        self.l.len()
    }

    /// Pattern of `[P̄ + σI, Ā_Sᵀ; Ā_S, −Δ]` over the rows `S`; the
    /// constraint block follows the variables in row order.
    fn kkt_pattern(&self, rows: &[usize]) -> EnvelopePattern {
        let n = self.n();
        let mut edges = Vec::new();
        for (i, j, _) in self.p.triplets() {
            if i != j {
                edges.push((i, j));
            }
        }
        for (k, &r) in rows.iter().enumerate() {
            edges.extend(self.a.row(r).map(|(c, _)| (n + k, c)));
        }
        EnvelopePattern::analyze(n + rows.len(), edges)
    }

    /// `[P̄ + σI, Ā_Sᵀ; Ā_S, −diag(neg)]` on a pattern from [`Self::kkt_pattern`].
    fn kkt<'p>(&self, pattern: &'p EnvelopePattern, sigma: f64, rows: &[usize], neg: &[f64]) -> SymmetricEnvelope<'p> {
        let n = self.n();
        let mut k = pattern.zeros();
        for (i, j, v) in self.p.triplets() {
            if j <= i {
                k.add(i, j, v);
            }
        }
        for i in 0..n {
            k.add(i, i, sigma);
        }
        for (idx, &r) in rows.iter().enumerate() {
            for (c, v) in self.a.row(r) {
                k.add(n + idx, c, v);
            }
            k.add(n + idx, n + idx, -neg[idx]);
        }
        k
    }

    fn rho_vector(&self, rho: f64) -> Vec<f64> {
        (0..self.rows())
            .map(|r| {
                if self.l[r] == self.u[r] {
                    RHO_EQ_FACTOR * rho
                } else if self.l[r].is_infinite() && self.u[r].is_infinite() {
                    RHO_MIN
                } else {
                    rho
                }
            })
            .collect()
    }

    fn unscale(&self, x: &[f64], y: &[f64]) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let primal = DVector::from_iterator(self.n(), x.iter().zip(&self.d).map(|(v, d)| v * d));
        let dual: Vec<f64> = y.iter().zip(&self.e).map(|(v, e)| v * e / self.c).collect();
        let eq = DVector::from_column_slice(&dual[..self.n_eq]);
        let ineq = DVector::from_iterator(dual.len() - self.n_eq, dual[self.n_eq..].iter().map(|v| v.max(0.0)));
        (primal, eq, ineq)
    }
}

/// Residuals of a scaled iterate, with the unscaled termination tests.
struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    /// Normalized scaled residuals driving the penalty update.
    prim_ratio: f64,
    dual_ratio: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.prim <= self.eps_prim && self.dual <= self.eps_dual
    }
}

struct Work {
    ax: Vec<f64>,
    px: Vec<f64>,
    aty: Vec<f64>,
}

impl Work {
    fn new(n: usize, rows: usize) -> Self {
        Self {
            ax: vec![0.0; rows],
            px: vec![0.0; n],
            aty: vec![0.0; n],
        }
    }
}

fn residuals(s: &Scaled, x: &[f64], z: &[f64], y: &[f64], w: &mut Work, settings: &QpSettings) -> Residuals {
    s.a.mul_vec(x, &mut w.ax);
    s.p.mul_vec(x, &mut w.px);
    w.aty.iter_mut().for_each(|v| *v = 0.0);
    s.a.tr_mul_vec_add(y, &mut w.aty);

    let mut prim = 0.0f64;
    let mut prim_scaled = 0.0f64;
    let mut ax_norm = 0.0f64;
    let mut z_norm = 0.0f64;
    let mut ax_scaled = 0.0f64;
    let mut z_scaled = 0.0f64;
    for r in 0..s.rows() {
        let einv = 1.0 / s.e[r];
        let diff = w.ax[r] - z[r];
        prim = prim.max((diff * einv).abs());
        prim_scaled = prim_scaled.max(diff.abs());
        ax_norm = ax_norm.max((w.ax[r] * einv).abs());
        z_norm = z_norm.max((z[r] * einv).abs());
        ax_scaled = ax_scaled.max(w.ax[r].abs());
        z_scaled = z_scaled.max(z[r].abs());
    }

    let cinv = 1.0 / s.c;
    let mut dual = 0.0f64;
    let mut dual_scaled = 0.0f64;
    let (mut px_norm, mut aty_norm, mut q_norm) = (0.0f64, 0.0f64, 0.0f64);
    let (mut px_scaled, mut aty_scaled) = (0.0f64, 0.0f64);
    for i in 0..s.n() {
        let dinv = cinv / s.d[i];
        let g = w.px[i] + s.q[i] + w.aty[i];
        dual = dual.max((g * dinv).abs());
        dual_scaled = dual_scaled.max(g.abs());
        px_norm = px_norm.max((w.px[i] * dinv).abs());
        aty_norm = aty_norm.max((w.aty[i] * dinv).abs());
        q_norm = q_norm.max((s.q[i] * dinv).abs());
        px_scaled = px_scaled.max(w.px[i].abs());
        aty_scaled = aty_scaled.max(w.aty[i].abs());
    }
    let q_scaled = inf_norm(&s.q);
    Residuals {
        prim,
        dual,
        eps_prim: settings.eps_abs + settings.eps_rel * ax_norm.max(z_norm),
        eps_dual: settings.eps_abs + settings.eps_rel * px_norm.max(aty_norm).max(q_norm),
        prim_ratio: prim_scaled / (ax_scaled.max(z_scaled) + 1e-30),
        dual_ratio: dual_scaled / (px_scaled.max(aty_scaled).max(q_scaled) + 1e-30),
    }
}

/// Certificate test on the dual increment `δy`: `Āᵀδy ≈ 0` with
/// `ūᵀδy₊ + l̄ᵀδy₋ < 0`.
fn primal_infeasible(s: &Scaled, dy: &mut [f64], w: &mut Work, eps: f64) -> bool {
    for r in 0..s.rows() {
        if s.u[r] == f64::INFINITY {
            dy[r] = dy[r].min(0.0);
        }
        if s.l[r] == f64::NEG_INFINITY {
            dy[r] = dy[r].max(0.0);
        }
    }
    let norm = dy.iter().zip(&s.e).fold(0.0f64, |m, (v, e)| m.max((v * e).abs()));
    if norm <= 1e-30 {
        return false;
    }
    let mut lhs = 0.0;
    for r in 0..s.rows() {
        let v = dy[r] / norm;
        if v > 0.0 {
            lhs += s.u[r] * v;
        } else if v < 0.0 {
            lhs += s.l[r] * v;
        }
    }
    if lhs >= -eps {
        return false;
    }
    w.aty.iter_mut().for_each(|v| *v = 0.0);
    s.a.tr_mul_vec_add(dy, &mut w.aty);
    let certificate = w
        .aty
        .iter()
        .zip(&s.d)
        .fold(0.0f64, |m, (v, d)| m.max((v / (d * norm)).abs()));
    certificate < eps
}

/// Rows treated as binding: every equality plus each inequality whose dual
/// outweighs its slack.
fn guess_active(s: &Scaled, z: &[f64], y: &[f64]) -> Vec<bool> {
    (0..s.rows())
        .map(|r| {
            s.l[r] == s.u[r] || s.u[r] - z[r] < y[r] || z[r] - s.l[r] < -y[r]
        })
        .collect()
}

/// Factorized KKT matrix `[P̄, Ā_Sᵀ; Ā_S, 0]` of one working set `S`,
/// regularized for the factorization and refined against the exact matrix
/// on solves. Rows outside `S` stay in the matrix, decoupled, so every
/// working set shares the pattern of the full row set.
struct SetKkt<'p> {
    member: Vec<bool>,
    ldl: EnvelopeLdl<'p>,
}

impl<'p> SetKkt<'p> {
    fn new(s: &Scaled, pattern: &'p EnvelopePattern, member: Vec<bool>) -> Option<Self> {
        let n = s.n();
        let mut k = pattern.zeros();
        for (i, j, v) in s.p.triplets() {
            if j <= i {
                k.add(i, j, v);
            }
        }
        for i in 0..n {
            k.add(i, i, POLISH_DELTA);
        }
        for (r, &m) in member.iter().enumerate() {
            if m {
                for (c, v) in s.a.row(r) {
                    k.add(n + r, c, v);
                }
                k.add(n + r, n + r, -POLISH_DELTA);
            } else {
                k.add(n + r, n + r, -1.0);
            }
        }
        let ldl = k.factorize_ldl().ok()?;
        Some(Self { member, ldl })
    }

    /// Solves `P̄x + Ā_Sᵀy_S = rx`, `Ā_S x = rc_S`; `rc` and the returned
    /// dual have full row length, zero outside `S`.
    fn solve(&mut self, s: &Scaled, rx: &[f64], rc: &[f64], w: &mut Work, refinements: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = s.n();
        let rows = s.rows();
        let mut sol = vec![0.0; n + rows];
        let mut res = vec![0.0; n + rows];
        for _ in 0..=refinements {
            let (x, y) = sol.split_at(n);
            s.p.mul_vec(x, &mut w.px);
            w.aty.iter_mut().for_each(|v| *v = 0.0);
            s.a.tr_mul_vec_add(y, &mut w.aty);
            s.a.mul_vec(x, &mut w.ax);
            for i in 0..n {
                res[i] = rx[i] - w.px[i] - w.aty[i];
            }
            for r in 0..rows {
                res[n + r] = if self.member[r] { rc[r] - w.ax[r] } else { 0.0 };
            }
            if inf_norm(&res) < 1e-14 * (1.0 + inf_norm(&sol)) {
                break;
            }
            self.ldl.solve_in_place(&mut res);
            for (v, d) in sol.iter_mut().zip(&res) {
                *v += d;
            }
        }
        let y = sol.split_off(n);
        sol.iter().chain(&y).all(|v| v.is_finite()).then_some((sol, y))
    }
}

/// Side of a row held in the working set: `+1` at the upper bound, `−1` at
/// the lower one. Duals times the side are nonnegative for inequalities.
fn side_bound(s: &Scaled, r: usize, side: f64) -> f64 {
    if side > 0.0 {
        s.u[r]
    } else {
        s.l[r]
    }
}

/// Exact solve on the active set guessed from the ADMM iterate.
///
/// The guess is first made dual feasible by dropping rows whose duals have
/// the wrong sign. Rows the solution still violates are then added one at a
/// time by dual active-set steps, which drop blocking rows on the way and
/// never lose dual feasibility. The result must pass the full termination
/// test.
fn polish(
    s: &Scaled,
    pattern: &EnvelopePattern,
    active: &[bool],
    y0: &[f64],
    w: &mut Work,
    settings: &QpSettings,
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = s.n();
    let rows = s.rows();
    let is_eq = |r: usize| s.l[r] == s.u[r];
    let mut side: Vec<f64> = (0..rows)
        .map(|r| {
            if is_eq(r) {
                1.0
            } else if !active[r] {
                0.0
            } else if y0[r] >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    if (0..rows).any(|r| side[r] != 0.0 && !side_bound(s, r, side[r]).is_finite()) {
        return None;
    }
    let neg_q: Vec<f64> = s.q.iter().map(|v| -v).collect();
    let refinements = settings.polish_refinements;
    let mut changes = 0;
    let member = |side: &[f64]| -> Vec<bool> { side.iter().map(|&v| v != 0.0).collect() };
    let targets = |side: &[f64]| -> Vec<f64> {
        (0..rows).map(|r| if side[r] == 0.0 { 0.0 } else { side_bound(s, r, side[r]) }).collect()
    };

    // Dual feasibility of the starting set.
    let (mut x, mut y) = loop {
        let (x, y) = SetKkt::new(s, pattern, member(&side))?.solve(s, &neg_q, &targets(&side), w, refinements)?;
        let wrong: Vec<usize> = (0..rows).filter(|&r| !is_eq(r) && side[r] * y[r] < 0.0).collect();
        if wrong.is_empty() {
            break (x, y);
        }
        changes += 1;
        if changes > settings.polish_corrections {
            return None;
        }
        for r in wrong {
            side[r] = 0.0;
        }
    };

    'outer: loop {
        s.a.mul_vec(&x, &mut w.ax);
        let mut worst = None;
        let mut worst_violation = 0.0;
        for r in 0..rows {
            if side[r] != 0.0 {
                continue;
            }
            let ax = w.ax[r];
            let tol = 1e-12 * (1.0 + ax.abs());
            for (sd, v) in [(1.0, ax - s.u[r]), (-1.0, s.l[r] - ax)] {
                if v > tol && v > worst_violation {
                    worst_violation = v;
                    worst = Some((r, sd));
                }
            }
        }
        let Some((p, sp)) = worst else { break };
        // Multiplier of the entering row, grown from zero.
        let mut mu = 0.0;
        loop {
            changes += 1;
            if changes > settings.polish_corrections {
                return None;
            }
            let mut kkt = SetKkt::new(s, pattern, member(&side))?;
            let mut rx = vec![0.0; n];
            for (c, v) in s.a.row(p) {
                rx[c] = -sp * v;
            }
            let (dx, dy) = kkt.solve(s, &rx, &vec![0.0; rows], w, refinements)?;
            let a_dx: f64 = s.a.row(p).map(|(c, v)| v * dx[c]).sum();
            let violation = sp * (s.a.row(p).map(|(c, v)| v * x[c]).sum::<f64>() - side_bound(s, p, sp));
            let full = if sp * a_dx < -1e-14 * (1.0 + inf_norm(&dx)) {
                violation / (-sp * a_dx)
            } else {
                f64::INFINITY
            };
            let mut partial = f64::INFINITY;
            let mut blocking = None;
            for r in 0..rows {
                if side[r] == 0.0 || is_eq(r) {
                    continue;
                }
                let rate = side[r] * dy[r];
                if rate < 0.0 {
                    let t = side[r] * y[r] / -rate;
                    if t < partial {
                        partial = t;
                        blocking = Some(r);
                    }
                }
            }
            let t = full.min(partial);
            if !t.is_finite() {
                // The entering row cannot be satisfied: infeasible subproblem.
                return None;
            }
            for i in 0..n {
                x[i] += t * dx[i];
            }
            for r in 0..rows {
                y[r] += t * dy[r];
            }
            mu += t;
            if full <= partial {
                side[p] = sp;
                y[p] = sp * mu;
                continue 'outer;
            }
            let k = blocking.expect("finite partial step has a blocking row");
            side[k] = 0.0;
            y[k] = 0.0;
        }
    }

    // Final exact solve on the converged set.
    let (x, mut y) = SetKkt::new(s, pattern, member(&side))?.solve(s, &neg_q, &targets(&side), w, refinements)?;
    for r in 0..rows {
        if !is_eq(r) && side[r] * y[r] < 0.0 {
            y[r] = 0.0;
        }
    }
    s.a.mul_vec(&x, &mut w.ax);
    let z: Vec<f64> = w
        .ax
        .iter()
        .enumerate()
        .map(|(r, v)| v.clamp(s.l[r], s.u[r]))
        .collect();
    let res = residuals(s, &x, &z, &y, w, settings);
    res.converged().then_some((x, z, y))
}

/// Solves `min ½zᵀHz + gᵀz  s.t.  Az = b, Gz ≤ h`.
pub fn solve_qp(qp: &QpProblem, settings: &QpSettings, warm: Option<&WarmStart>) -> QpSolution {
    let start = Instant::now();
    let s = Scaled::new(qp, settings.scaling_iterations);
    let n = s.n();
    let rows = s.rows();
    let all_rows: Vec<usize> = (0..s.rows()).collect();
    let pattern = s.kkt_pattern(&all_rows);
    let mut w = Work::new(n, rows);

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; rows];
    let mut y = vec![0.0; rows];
    if let Some(ws) = warm.filter(|ws| {
        ws.primal.len() == n && ws.eq_dual.len() == s.n_eq && ws.ineq_dual.len() == rows - s.n_eq
    }) {
        for i in 0..n {
            x[i] = ws.primal[i] / s.d[i];
        }
        for r in 0..rows {
            let raw = if r < s.n_eq {
                ws.eq_dual[r]
            } else {
                ws.ineq_dual[r - s.n_eq]
            };
            y[r] = raw * s.c / s.e[r];
        }
        s.a.mul_vec(&x, &mut w.ax);
        for r in 0..rows {
            z[r] = w.ax[r].clamp(s.l[r], s.u[r]);
        }
    }

    let finish = |s: &Scaled, x: &[f64], y: &[f64], status, iterations, polished| {
        let (primal, eq_dual, ineq_dual) = s.unscale(x, y);
        QpSolution {
            primal,
            eq_dual,
            ineq_dual,
            status,
            iterations,
            polished,
            solve_time: start.elapsed(),
        }
    };

    let try_polish = |z: &[f64], y: &[f64], w: &mut Work| {
        if !settings.polish {
            return None;
        }
        let active = guess_active(&s, z, y);
        polish(&s, &pattern, &active, y, w, settings).map(|p| (p, active))
    };

    if warm.is_some() {
        let res = residuals(&s, &x, &z, &y, &mut w, settings);
        if res.converged() {
            return finish(&s, &x, &y, QpStatus::Solved, 0, false);
        }
    }

    let mut rho = settings.rho;
    let mut rho_vec = s.rho_vector(rho);
    let factor = |rho_vec: &[f64]| -> Option<EnvelopeLdl<'_>> {
        let inv: Vec<f64> = rho_vec.iter().map(|r| 1.0 / r).collect();
        s.kkt(&pattern, settings.sigma, &all_rows, &inv).factorize_ldl().ok()
    };
    let Some(mut chol) = factor(&rho_vec) else {
        return finish(&s, &x, &y, QpStatus::MaxIterations, 0, false);
    };

    let mut rhs = vec![0.0; n + rows];
    let mut zt = vec![0.0; rows];
    let mut dy = vec![0.0; rows];
    let mut last_polish_set: Option<Vec<bool>> = None;

    for iter in 1..=settings.max_iterations {
        for i in 0..n {
            rhs[i] = settings.sigma * x[i] - s.q[i];
        }
        for r in 0..rows {
            rhs[n + r] = z[r] - y[r] / rho_vec[r];
        }
        chol.solve_in_place(&mut rhs);
        for r in 0..rows {
            zt[r] = z[r] + (rhs[n + r] - y[r]) / rho_vec[r];
        }
        let alpha = settings.alpha;
        for i in 0..n {
            x[i] = alpha * rhs[i] + (1.0 - alpha) * x[i];
        }
        for r in 0..rows {
            let relaxed = alpha * zt[r] + (1.0 - alpha) * z[r];
            let z_new = (relaxed + y[r] / rho_vec[r]).clamp(s.l[r], s.u[r]);
            let y_new = y[r] + rho_vec[r] * (relaxed - z_new);
            dy[r] = y_new - y[r];
            y[r] = y_new;
            z[r] = z_new;
        }

        let res = residuals(&s, &x, &z, &y, &mut w, settings);
        if res.converged() {
            if let Some(((px, _, py), _)) = try_polish(&z, &y, &mut w) {
                return finish(&s, &px, &py, QpStatus::Solved, iter, true);
            }
            return finish(&s, &x, &y, QpStatus::Solved, iter, false);
        }
        if primal_infeasible(&s, &mut dy, &mut w, settings.eps_infeasible) {
            return finish(&s, &x, &y, QpStatus::Infeasible, iter, false);
        }
        if settings.polish && iter % settings.polish_interval == 0 {
            let active = guess_active(&s, &z, &y);
            if last_polish_set.as_ref() != Some(&active) {
                if let Some((px, _, py)) = polish(&s, &pattern, &active, &y, &mut w, settings) {
                    return finish(&s, &px, &py, QpStatus::Solved, iter, true);
                }
                last_polish_set = Some(active);
            }
        }
        if settings.adaptive_rho && iter % settings.adaptive_rho_interval == 0 {
            let estimate = (rho * (res.prim_ratio / (res.dual_ratio + 1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if estimate > 5.0 * rho || estimate < 0.2 * rho {
                rho = estimate;
                rho_vec = s.rho_vector(rho);
                match factor(&rho_vec) {
                    Some(c) => chol = c,
                    None => return finish(&s, &x, &y, QpStatus::MaxIterations, iter, false),
                }
            }
        }
    }
    if let Some(((px, _, py), _)) = try_polish(&z, &y, &mut w) {
        return finish(&s, &px, &py, QpStatus::Solved, settings.max_iterations, true);
    }
    finish(&s, &x, &y, QpStatus::MaxIterations, settings.max_iterations, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar(h: f64, g: f64, ineq: Option<(f64, f64)>) -> QpProblem {
        let (gm, hv) = match ineq {
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
    fn unconstrained_minimum() {
        // (x − 1)² = x² − 2x + 1
        let sol = solve_qp(&scalar(2.0, -2.0, None), &QpSettings::default(), None);
        assert!(sol.is_solved());
        assert!((sol.primal[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bound_constrained_minimum_and_dual() {
        // min x² s.t. −x ≤ −1
        let sol = solve_qp(&scalar(2.0, 0.0, Some((-1.0, -1.0))), &QpSettings::default(), None);
        assert!(sol.is_solved());
        assert!((sol.primal[0] - 1.0).abs() < 1e-9);
        assert!((sol.ineq_dual[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn detects_infeasibility() {
        // x ≤ −1 and −x ≤ −1
        let qp = QpProblem::from_dense(
            &DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            &DMatrix::zeros(0, 1),
            DVector::zeros(0),
            &DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        )
        .unwrap();
        let sol = solve_qp(&qp, &QpSettings::default(), None);
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn warm_start_from_solution_is_immediate() {
        let qp = QpProblem::from_dense(
            &DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![1.0, -1.0]),
            &DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            &DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DVector::from_vec(vec![0.5]),
        )
        .unwrap();
        let settings = QpSettings::default();
        let first = solve_qp(&qp, &settings, None);
        assert!(first.is_solved());
        let again = solve_qp(&qp, &settings, Some(&WarmStart::from(&first)));
        assert!(again.is_solved());
        assert!(again.iterations <= 5, "{} iterations", again.iterations);
    }
}
