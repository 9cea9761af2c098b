//! Parametric nonlinear programs: problem representation, KKT evaluation,
//! active-set classification, regularity checks and an instance solver.

mod audit;
mod eval;
mod kkt;
mod program;
mod qp;
mod solve;

pub use audit::{audit_assumptions, AuditOptions, AuditReport, DualCertificate};
pub use eval::{fd_jacobian, Evaluator};
pub use kkt::{
    check_regularity, classify_active_set, kkt_residual, ActiveSetClassification, KktTolerances,
    KktTriple, RegularityReport,
};
pub use program::{ClosureProgram, Dims, ParametricProgram, ParametricQp, QuadraticData};
pub use qp::{solve_qp, QpOptions, QpSolution};
pub use solve::{phase1_value, solve_instance, SolveOptions};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NlpError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("point is infeasible: inequality {index} has value {value:e}")]
    Infeasible { index: usize, value: f64 },
    #[error("feasible set is empty (phase-1 value {phase1_value:e})")]
    InfeasibleProblem { phase1_value: f64 },
    #[error("solver stopped after {iterations} iterations with KKT residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("quadratic term is not positive definite")]
    NotStronglyConvex,
    #[error("missing derivative ({0}) and finite differences are disabled")]
    MissingDerivative(&'static str),
    #[error("no dual-bound certificate supplied for curved constraints")]
    MissingCertificates,
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
