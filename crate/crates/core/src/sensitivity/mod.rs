//! Derivatives and Lipschitz bounds of the solution map `ξ ↦ (x*, λ*, μ*)`.

mod blocks;
mod bounds;
mod jacobian;

pub use blocks::{assemble_blocks, SensitivityBlocks, HESSIAN_FLOOR};
pub use bounds::{
    degenerate_lipschitz_bounds, global_lipschitz_bounds, lipschitz_sweep, local_lipschitz_bounds,
    special_case_bound, ActiveChoiceBound, BoundConstants, BoundMode, DegenerateReport,
    LipschitzBoundReport, SpecialCase, SpecialConstants, SweepResult, MAX_ENUMERATED_WEAK,
};
pub use jacobian::{
    default_fd_step, fd_jacobian_oracle, solution_jacobian, FdJacobians, SolutionJacobians,
};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::nlp::NlpError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("row choice must contain every strongly active row (missing {missing_strong:?}) and only active rows (extra {not_active:?})")]
    InvalidActiveChoice {
        missing_strong: Vec<usize>,
        not_active: Vec<usize>,
    },
    #[error("Hessian of the Lagrangian is not positive definite (smallest eigenvalue {lambda_min:e})")]
    AssumptionViolated { lambda_min: f64 },
    #[error("constraint Jacobian is rank deficient: sigma_min {sigma_min:e} <= {tol:e}")]
    RankDeficient { sigma_min: f64, tol: f64 },
    #[error("unknown special case `{0}`")]
    UnknownCase(String),
    #[error("missing or invalid constant `{0}`")]
    MissingConstant(&'static str),
    #[error("{0} weakly active rows exceed the enumeration limit")]
    TooManyWeaklyActive(usize),
    #[error("path samples {0} and {0}+1 coincide but their solutions differ")]
    RepeatedSample(usize),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
