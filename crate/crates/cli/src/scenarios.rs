//! Turning configs and built-in names into runnable scenarios, and the
//! constants that go into their tracking bounds.

use std::fmt;
use std::str::FromStr;

use tvopt_core::flows::{
    project_polyhedron, sup_norm, MovingPolyhedron, ScenarioKind, Signal, TimeVaryingScenario,
};
use tvopt_core::linalg::{Cholesky, Matrix};
use tvopt_core::nlp::{audit_assumptions, AuditOptions};
use tvopt_core::sensitivity::{global_lipschitz_bounds, special_case_bound, LipschitzBoundReport, SpecialConstants};

use crate::config::{ConfigError, ConstantOverrides, Kind, ScenarioConfig, TargetSpec};

/// How the cost-motion constant is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstantsMode {
    /// `L̄ = sup‖∂_t ∇_x f‖`, the cross-derivative bound, plugged into the
    /// global formula.
    #[default]
    Paper,
    /// `ℓ_c = sup‖ċ‖`, the Lipschitz constant of the target itself, plugged
    /// into the translational/composite special cases.
    Strict,
}

impl FromStr for ConstantsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Self::Paper),
            "strict" => Ok(Self::Strict),
            other => Err(format!("unknown constants mode `{other}` (expected paper or strict)")),
        }
    }
}

impl fmt::Display for ConstantsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Strict => "strict",
        })
    }
}

/// A scenario ready to run, with its start point and default step.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: TimeVaryingScenario,
    pub x0: Vec<f64>,
    pub step: f64,
    /// `sup_t ‖∂_t ∇_x f(x, t)‖ = sup_t ‖2Q ċ(t)‖`.
    pub ell_p: f64,
    /// Tracking rate; defaults to `α`.
    pub a: f64,
    /// How `ω` was obtained: `override`, `faces` or `none`.
    pub omega_source: &'static str,
    pub overrides: ConstantOverrides,
}

impl Prepared {
    /// Same scenario over a different horizon, with every derived constant
    /// recomputed over the new horizon.
    pub fn with_horizon(self, horizon: f64) -> Result<Prepared, ConfigError> {
        let s = self.scenario;
        let scenario = TimeVaryingScenario::new(s.name, s.q, s.c, s.constraints, horizon)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        finish(scenario, self.x0, self.step, &self.overrides)
    }
}

pub const BUILTINS: [&str; 2] = ["paper-ex1", "paper-ex2"];

pub fn builtin(name: &str) -> Result<Prepared, ConfigError> {
    match name {
        "paper-ex1" => Ok(paper_ex1()),
        "paper-ex2" => Ok(paper_ex2()),
        other => Err(ConfigError::UnknownBuiltin(other.to_string())),
    }
}

/// `min (x − ξ̃(t))²` with `ξ̃` a triangular wave of period 4 between −1
/// and 1, tracked by the gradient flow from `x(0) = 5`.
pub fn paper_ex1() -> Prepared {
    let scenario = TimeVaryingScenario::new(
        "paper-ex1",
        Matrix::identity(1),
        Signal::TriangularWave {
            period: 4.0,
            slope: 1.0,
        },
        None,
        40.0,
    )
    .expect("builtin scenario is valid");
    finish(scenario, vec![5.0], 1e-3, &ConstantOverrides::default())
        .expect("builtin scenario is valid")
}

pub fn paper_ex2_q() -> Matrix {
    Matrix::from_rows(&[[12.0, -8.0], [-8.0, 10.0]])
}

pub fn paper_ex2_u() -> Matrix {
    Matrix::from_rows(&[[-2.0, 1.0], [1.0, -1.0], [0.5, 1.0], [-3.0, -1.0]])
}

pub const PAPER_EX2_V1: [f64; 4] = [-0.05, -0.3, 0.25, -0.5];
pub const PAPER_EX2_V2: [f64; 4] = [-2.0, 5.0, 4.0, 3.0];

fn paper_ex2_p(t: f64) -> Vec<f64> {
    vec![-(3.0 * (t + 3.0).sin() + 1.3 * t), -(2.0 * (t - 3.0).tanh() + 0.71 * t)]
}

fn paper_ex2_p_dot(t: f64) -> Vec<f64> {
    let sech = 1.0 / (t - 3.0).cosh();
    vec![-(3.0 * (t + 3.0).cos() + 1.3), -(2.0 * sech * sech + 0.71)]
}

/// `min (x − c(t))ᵀQ(x − c(t))  s.t.  Ux ≤ V₁t + V₂` with
/// `c(t) = −½Q⁻¹P(t)`, tracked by the sweeping gradient flow from
/// `x(0) = (1.5, 0.5)`. The set empties near `t ≈ 23.5`; the horizon runs
/// past that so the run ends at the first empty set.
pub fn paper_ex2() -> Prepared {
    let q = paper_ex2_q();
    let c = target_from_p(&q, paper_ex2_p, paper_ex2_p_dot);
    let scenario = TimeVaryingScenario::new(
        "paper-ex2",
        q,
        c,
        Some(MovingPolyhedron {
            u: paper_ex2_u(),
            v: Signal::Affine {
                slope: PAPER_EX2_V1.to_vec(),
                offset: PAPER_EX2_V2.to_vec(),
            },
        }),
        30.0,
    )
    .expect("builtin scenario is valid");
    finish(scenario, vec![1.5, 0.5], 1e-3, &ConstantOverrides::default()).expect("builtin scenario is valid")
}

/// `c(t) = −½Q⁻¹P(t)` as a signal.
fn target_from_p(
    q: &Matrix,
    p: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    p_dot: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
) -> Signal {
    let q_inv = Cholesky::new(q).expect("Q is positive definite").inverse();
    let q_inv2 = q_inv.clone();
    Signal::smooth(
        q.rows(),
        move |t| q_inv.mul_vec(&p(t)).into_iter().map(|v| -0.5 * v).collect(),
        move |t| q_inv2.mul_vec(&p_dot(t)).into_iter().map(|v| -0.5 * v).collect(),
    )
}

pub fn from_config(cfg: &ScenarioConfig) -> Result<Prepared, ConfigError> {
    cfg.validate()?;
    let q = Matrix::from_rows(&cfg.q);
    let c = match &cfg.target {
        TargetSpec::TriangularWave { period, slope } => Signal::TriangularWave {
            period: *period,
            slope: *slope,
        },
        TargetSpec::C(_) => {
            let exprs = cfg.expressions()?;
            let derivs: Vec<_> = exprs.iter().map(|e| e.derivative()).collect();
            Signal::smooth(
                cfg.n,
                move |t| exprs.iter().map(|e| e.eval(t)).collect(),
                move |t| derivs.iter().map(|e| e.eval(t)).collect(),
            )
        }
        TargetSpec::P(_) => {
            if Cholesky::new(&q).is_err() {
                return Err(ConfigError::Invalid("q must be symmetric positive definite".into()));
            }
            let exprs = cfg.expressions()?;
            let derivs: Vec<_> = exprs.iter().map(|e| e.derivative()).collect();
            target_from_p(
                &q,
                move |t| exprs.iter().map(|e| e.eval(t)).collect(),
                move |t| derivs.iter().map(|e| e.eval(t)).collect(),
            )
        }
    };
    let constraints = match cfg.kind {
        Kind::Unconstrained => None,
        Kind::PolyhedralSweeping => Some(MovingPolyhedron {
            u: Matrix::from_rows(&cfg.u),
            v: Signal::Affine {
                slope: cfg.v1.clone(),
                offset: cfg.v2.clone(),
            },
        }),
    };
    let scenario = TimeVaryingScenario::new(cfg.name.clone(), q, c, constraints, cfg.horizon)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    finish(scenario, cfg.x0.clone(), cfg.step, &cfg.constants)
}

fn finish(
    mut scenario: TimeVaryingScenario,
    x0: Vec<f64>,
    step: f64,
    ov: &ConstantOverrides,
) -> Result<Prepared, ConfigError> {
    let samples = ((scenario.horizon * 1000.0) as usize).clamp(1000, 200_000);
    let two_q = scenario.q.scale(2.0);
    let ell_p = match &scenario.c {
        // ċ is piecewise constant, so ‖2Qċ‖ takes two values.
        Signal::TriangularWave { slope, .. } => two_q.norm2() * slope.abs(),
        c => {
            let c = c.clone();
            sup_norm(|t| two_q.mul_vec(&c.derivative(t)), 0.0, scenario.horizon, samples)
        }
    };
    let k = &mut scenario.constants;
    if let Some(v) = ov.alpha {
        k.alpha = v;
    }
    if let Some(v) = ov.beta {
        k.beta = v;
    }
    if let Some(v) = ov.ell_c {
        k.ell_c = v;
    }
    if let Some(v) = ov.ell_v {
        k.ell_v = v;
    }
    let omega_source = match (ov.omega, scenario.kind()) {
        (Some(w), _) => {
            scenario.constants.omega = Some(w);
            "override"
        }
        (None, ScenarioKind::Unconstrained) => "none",
        (None, ScenarioKind::PolyhedralSweeping) => {
            scenario.constants.omega = face_omega(&scenario);
            "faces"
        }
    };
    let a = ov.a.unwrap_or(scenario.constants.alpha);
    Ok(Prepared {
        scenario,
        x0,
        step,
        ell_p,
        a,
        omega_source,
        overrides: ov.clone(),
    })
}

/// Last time on a uniform grid over the horizon before the set first
/// becomes empty; the horizon itself when it never does.
pub fn feasible_until(scenario: &TimeVaryingScenario, grid_points: usize) -> f64 {
    let Some(poly) = &scenario.constraints else {
        return scenario.horizon;
    };
    let n = scenario.n();
    let dt = scenario.horizon / grid_points as f64;
    let mut last = 0.0;
    for k in 0..=grid_points {
        let t = k as f64 * dt;
        if project_polyhedron(&vec![0.0; n], &poly.u, &poly.v.value(t)).is_err() {
            return last;
        }
        last = t;
    }
    scenario.horizon
}

/// Smallest `σ_min` over the nonempty faces of the polyhedron, sampled over
/// the feasible part of the horizon.
fn face_omega(scenario: &TimeVaryingScenario) -> Option<f64> {
    let end = feasible_until(scenario, 2000);
    let samples: Vec<Vec<f64>> = (0..=200).map(|k| vec![end * k as f64 / 200.0]).collect();
    let report = audit_assumptions(&scenario.program(), &samples, &AuditOptions::default()).ok()?;
    report.omega_faces.filter(|w| *w > 0.0)
}

/// The Lipschitz bound on `t ↦ x*(t)` under the chosen constants mode.
pub fn time_bound(p: &Prepared, mode: ConstantsMode) -> Result<LipschitzBoundReport, tvopt_core::sensitivity::SensitivityError> {
    let k = &p.scenario.constants;
    match (p.scenario.kind(), mode) {
        (ScenarioKind::Unconstrained, ConstantsMode::Paper) => special_case_bound(
            "unconstrained",
            &SpecialConstants {
                ell_f: Some(p.ell_p),
                alpha: Some(k.alpha),
                ..Default::default()
            },
        ),
        (ScenarioKind::Unconstrained, ConstantsMode::Strict) => special_case_bound(
            "translational",
            &SpecialConstants {
                alpha: Some(k.alpha),
                beta: Some(k.beta),
                ell_c: Some(k.ell_c),
                ..Default::default()
            },
        ),
        (ScenarioKind::PolyhedralSweeping, ConstantsMode::Paper) => {
            global_lipschitz_bounds(k.alpha, k.beta, &[], &[], k.omega, p.ell_p, k.ell_v)
        }
        (ScenarioKind::PolyhedralSweeping, ConstantsMode::Strict) => special_case_bound(
            "composite",
            &SpecialConstants {
                alpha: Some(k.alpha),
                beta: Some(k.beta),
                omega: k.omega,
                ell_c: Some(k.ell_c),
                ell_v: Some(k.ell_v),
                ..Default::default()
            },
        ),
    }
}
