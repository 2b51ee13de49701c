use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use super::sparse::CsrMatrix;
use super::QpError;

/// Position of each stage block in the stacked decision vector
/// `[δx_0 … δx_N, δu_0 … δu_{N-1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageLayout {
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
}

impl StageLayout {
    pub fn num_vars(&self) -> usize {
        self.state_dim * (self.horizon + 1) + self.input_dim * self.horizon
    }

    pub fn state_offset(&self, stage: usize) -> usize {
        debug_assert!(stage <= self.horizon);
        stage * self.state_dim
    }

    pub fn input_offset(&self, stage: usize) -> usize {
        debug_assert!(stage < self.horizon);
        self.state_dim * (self.horizon + 1) + stage * self.input_dim
    }

    /// Equality rows: initial value, input anchor, terminal hold, dynamics.
    pub fn num_equalities(&self) -> usize {
        self.state_dim * (self.horizon + 1) + 2 * self.input_dim
    }

    pub fn state(&self, z: &DVector<f64>, stage: usize) -> DVector<f64> {
        z.rows(self.state_offset(stage), self.state_dim).into_owned()
    }

    pub fn input(&self, z: &DVector<f64>, stage: usize) -> DVector<f64> {
        z.rows(self.input_offset(stage), self.input_dim).into_owned()
    }
}

/// `min ½ zᵀHz + gᵀz  s.t.  A z = b,  G z ≤ h`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Full symmetric Hessian (both triangles stored).
    pub hessian: CsrMatrix,
    pub gradient: DVector<f64>,
    pub eq_matrix: CsrMatrix,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: CsrMatrix,
    pub ineq_rhs: DVector<f64>,
    /// Present for problems assembled from a stage-structured horizon.
    pub layout: Option<StageLayout>,
}

impl QpProblem {
    /// A problem from dense data; empty constraint blocks may have zero rows.
    pub fn from_dense(
        hessian: &DMatrix<f64>,
        gradient: DVector<f64>,
        eq_matrix: &DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_matrix: &DMatrix<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self, QpError> {
        let qp = Self {
            hessian: CsrMatrix::from_dense(hessian),
            gradient,
            eq_matrix: CsrMatrix::from_dense(eq_matrix),
            eq_rhs,
            ineq_matrix: CsrMatrix::from_dense(ineq_matrix),
            ineq_rhs,
            layout: None,
        };
        qp.check()?;
        Ok(qp)
    }

    pub fn num_vars(&self) -> usize {
        self.gradient.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    /// Dimension and finiteness checks.
    pub fn check(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        let dims = [
            ("hessian rows", self.hessian.nrows(), n),
            ("hessian cols", self.hessian.ncols(), n),
            ("equality cols", self.eq_matrix.ncols(), n),
            ("equality rows", self.eq_matrix.nrows(), self.num_eq()),
            ("inequality cols", self.ineq_matrix.ncols(), n),
            ("inequality rows", self.ineq_matrix.nrows(), self.num_ineq()),
        ];
        for (what, found, expected) in dims {
            if found != expected {
                return Err(QpError::DimensionMismatch {
                    what,
                    expected,
                    found,
                });
            }
        }
        let finite = self.hessian.is_finite()
            && self.eq_matrix.is_finite()
            && self.ineq_matrix.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.eq_rhs.iter().all(|v| v.is_finite())
            && self.ineq_rhs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(QpError::NonFinite { what: "problem data" });
        }
        Ok(())
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        let mut hz = vec![0.0; self.num_vars()];
        self.hessian.mul_vec(z.as_slice(), &mut hz);
        0.5 * z.iter().zip(&hz).map(|(a, b)| a * b).sum::<f64>() + self.gradient.dot(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIterations,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Solved => "solved",
            Self::MaxIterations => "max_iterations",
            Self::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub primal: DVector<f64>,
    pub eq_dual: DVector<f64>,
    /// Non-negative at a solution.
    pub ineq_dual: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// Whether the returned point came from the active-set refinement.
    pub polished: bool,
    pub solve_time: Duration,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

/// Output selection and normalized weights of the tracking cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    /// State indices picked by the output matrix `C`.
    pub outputs: Vec<usize>,
    pub output_weights: Vec<f64>,
    /// `max − min` used to normalize each output error.
    pub output_ranges: Vec<f64>,
    pub input_weights: Vec<f64>,
    /// `max − min` used to normalize each input increment.
    pub input_ranges: Vec<f64>,
}

impl CostWeights {
    /// Effective diagonal weight `w / range²` on each raw output error.
    pub fn output_scale(&self) -> Vec<f64> {
        self.output_weights
            .iter()
            .zip(&self.output_ranges)
            .map(|(w, r)| w / (r * r))
            .collect()
    }

    pub fn input_scale(&self) -> Vec<f64> {
        self.input_weights
            .iter()
            .zip(&self.input_ranges)
            .map(|(w, r)| w / (r * r))
            .collect()
    }

    /// Output matrix `C` for an `n`-dimensional state.
    pub fn output_matrix(&self, n: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.outputs.len(), n);
        for (row, &idx) in self.outputs.iter().enumerate() {
            c[(row, idx)] = 1.0;
        }
        c
    }

    pub fn validate(&self, state_dim: usize, input_dim: usize) -> Result<(), QpError> {
        let k = self.outputs.len();
        for (what, found, expected) in [
            ("output weights", self.output_weights.len(), k),
            ("output ranges", self.output_ranges.len(), k),
            ("input weights", self.input_weights.len(), input_dim),
            ("input ranges", self.input_ranges.len(), input_dim),
        ] {
            if found != expected {
                return Err(QpError::DimensionMismatch {
                    what,
                    expected,
                    found,
                });
            }
        }
        if let Some(&bad) = self.outputs.iter().find(|&&i| i >= state_dim) {
            return Err(QpError::DimensionMismatch {
                what: "output index",
                expected: state_dim,
                found: bad,
            });
        }
        let weights_ok = self
            .output_weights
            .iter()
            .chain(&self.input_weights)
            .all(|w| w.is_finite() && *w >= 0.0);
        let ranges_ok = self
            .output_ranges
            .iter()
            .chain(&self.input_ranges)
            .all(|r| r.is_finite() && *r > 0.0);
        if !(weights_ok && ranges_ok) {
            return Err(QpError::InvalidWeights);
        }
        Ok(())
    }
}
