//! Sparse stage-structured quadratic programs: assembly, an operator-splitting
//! solver with active-set polishing, and optimality diagnostics.

mod admm;
mod build;
mod dump;
pub mod envelope;
mod kkt;
mod problem;
pub mod sparse;

pub use admm::{solve_qp, QpSettings, QpSolver, WarmStart};
pub use build::{build_qp, QpInputs};
pub use dump::{read_qp_dump, write_qp_dump, DumpError};
pub use kkt::{kkt_residuals, kkt_residuals_at, KktResiduals};
pub use problem::{CostWeights, QpProblem, QpSolution, QpStatus, StageLayout};
pub use sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("cost weights must be nonnegative and ranges strictly positive")]
    InvalidWeights,
    #[error("horizon {0} is too short, need at least 2 stages")]
    HorizonTooShort(usize),
}
