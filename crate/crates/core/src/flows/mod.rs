//! Continuous-time running algorithms for time-varying problems and
//! certification of their tracking error.

mod run;
mod scenario;
mod signal;

pub use run::{
    endpoint, gradient_flow_step, run_and_certify, set_variation_estimate, sweeping_flow_step, CertifyOptions,
    TrackingCertificate, TrajectoryRecord,
};
pub use scenario::{
    instantaneous_optimizer, project_polyhedron, MovingPolyhedron, ScenarioConstants, ScenarioKind,
    ScenarioProgram, TimeVaryingScenario,
};
pub use signal::{sup_norm, Signal};

use thiserror::Error;

use crate::nlp::NlpError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("constraint set is empty{}", .t.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    EmptyPolyhedron { t: Option<f64> },
    #[error("initial point violates the constraints by {0:e}")]
    InfeasibleStart(f64),
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("cost matrix is not symmetric positive definite")]
    NotStronglyConvex,
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("{0}")]
    WrongKind(&'static str),
    #[error(transparent)]
    Nlp(#[from] NlpError),
}
