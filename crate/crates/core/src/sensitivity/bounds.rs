//! Lipschitz bounds on the solution map: local, weakly-active, global and the
//! closed-form special cases.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{assemble_blocks, SensitivityBlocks, SensitivityError};
use crate::linalg::norm2;
use crate::nlp::{classify_active_set, solve_instance, KktTolerances, KktTriple, ParametricProgram, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialCase {
    /// No constraints: `ℓ_x = ℓ_f / α`.
    Unconstrained,
    /// Cost `f̂(x − c(ξ))`: the global bound with `L̄ = β ℓ_c`.
    Translational,
    /// Linear constraints with moving right-hand side `Ux ≤ v(ξ)`.
    Linear,
    /// Translational cost and linear constraints together.
    Composite,
}

impl SpecialCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Unconstrained => "unconstrained",
            Self::Translational => "translational",
            Self::Linear => "linear",
            Self::Composite => "composite",
        }
    }
}

impl FromStr for SpecialCase {
    type Err = SensitivityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unconstrained" => Ok(Self::Unconstrained),
            "translational" => Ok(Self::Translational),
            "linear" => Ok(Self::Linear),
            "composite" => Ok(Self::Composite),
            other => Err(SensitivityError::UnknownCase(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    Local,
    Degenerate,
    Global,
    Special(SpecialCase),
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Local => f.write_str("local"),
            Self::Degenerate => f.write_str("degenerate"),
            Self::Global => f.write_str("global"),
            Self::Special(case) => write!(f, "special:{}", case.as_str()),
        }
    }
}

/// Constants that went into a bound, sufficient to recompute it.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundConstants {
    Local {
        lambda_min: f64,
        lambda_max: f64,
        /// `None` when there are no equality or selected inequality rows.
        sigma_min_bt: Option<f64>,
        lstar_norm: f64,
        gstar_norm: f64,
    },
    Global {
        alpha: f64,
        beta: f64,
        zeta: Vec<f64>,
        ell_g: Vec<f64>,
        /// `None` for unconstrained programs.
        omega: Option<f64>,
        lbar: f64,
        gbar: f64,
    },
    Unconstrained {
        ell_f: f64,
        alpha: f64,
    },
    Linear {
        alpha: f64,
        beta: f64,
        omega: f64,
        ell_v: f64,
    },
    Composite {
        alpha: f64,
        beta: f64,
        omega: f64,
        ell_c: f64,
        ell_v: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzBoundReport {
    pub ell_x: f64,
    pub ell_lm: f64,
    pub constants: BoundConstants,
    pub mode: BoundMode,
}

impl LipschitzBoundReport {
    fn from_constants(constants: BoundConstants, mode: BoundMode) -> Self {
        let (ell_x, ell_lm) = evaluate(&constants);
        Self {
            ell_x,
            ell_lm,
            constants,
            mode,
        }
    }

    /// Re-evaluates the bound formula from the stored constants.
    pub fn recompute(&self) -> (f64, f64) {
        evaluate(&self.constants)
    }
}

fn evaluate(c: &BoundConstants) -> (f64, f64) {
    match c {
        BoundConstants::Local {
            lambda_min,
            lambda_max,
            sigma_min_bt,
            lstar_norm,
            gstar_norm,
        } => {
            let paren = match sigma_min_bt {
                Some(s) => lstar_norm / lambda_min + gstar_norm / s,
                None => lstar_norm / lambda_min,
            };
            let ell_x = (lambda_max / lambda_min).sqrt() * paren;
            let ell_lm = match sigma_min_bt {
                Some(s) => lambda_max.powf(1.5) / (s * lambda_min.sqrt()) * paren,
                None => 0.0,
            };
            (ell_x, ell_lm)
        }
        BoundConstants::Global {
            alpha,
            beta,
            zeta,
            ell_g,
            omega,
            lbar,
            gbar,
        } => {
            let curvature = beta + zeta.iter().zip(ell_g).map(|(z, l)| z * l).sum::<f64>();
            let paren = match omega {
                Some(w) => lbar / alpha + gbar / w,
                None => lbar / alpha,
            };
            let ell_x = (curvature / alpha).sqrt() * paren;
            let ell_lm = match omega {
                Some(w) => curvature.powf(1.5) / (alpha.sqrt() * w) * paren,
                None => 0.0,
            };
            (ell_x, ell_lm)
        }
        BoundConstants::Unconstrained { ell_f, alpha } => (ell_f / alpha, 0.0),
        BoundConstants::Linear {
            alpha,
            beta,
            omega,
            ell_v,
        } => (
            (beta / alpha).sqrt() * ell_v / omega,
            beta.powf(1.5) * ell_v / (alpha.sqrt() * omega * omega),
        ),
        BoundConstants::Composite {
            alpha,
            beta,
            omega,
            ell_c,
            ell_v,
        } => {
            let paren = beta * ell_c / alpha + ell_v / omega;
            (
                (beta / alpha).sqrt() * paren,
                beta.powf(1.5) / (alpha.sqrt() * omega) * paren,
            )
        }
    }
}

/// Local bound at one KKT point:
///
/// ```text
/// ℓ_x  = √(λ_max/λ_min) · (‖L*‖/λ_min + ‖G*‖/σ_min(Bᵀ))
/// ℓ_lm = λ_max^{3/2} / (σ_min(Bᵀ) λ_min^{1/2}) · (same)
/// ```
///
/// With no rows in `B` the `G*` term is dropped and `ℓ_lm = 0`.
pub fn local_lipschitz_bounds(blocks: &SensitivityBlocks) -> LipschitzBoundReport {
    local_with_mode(blocks, BoundMode::Local)
}

fn local_with_mode(blocks: &SensitivityBlocks, mode: BoundMode) -> LipschitzBoundReport {
    LipschitzBoundReport::from_constants(
        BoundConstants::Local {
            lambda_min: blocks.lambda_min,
            lambda_max: blocks.lambda_max,
            sigma_min_bt: blocks.sigma_min_bt,
            lstar_norm: blocks.l_star.norm2(),
            gstar_norm: blocks.g_star.norm2(),
        },
        mode,
    )
}

/// Bound for one admissible row choice `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveChoiceBound {
    pub rows: Vec<usize>,
    pub ell_x: f64,
    pub ell_lm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateReport {
    pub report: LipschitzBoundReport,
    /// Every `Iˢ ⊆ R ⊆ I` with its local bound, when enumeration was
    /// requested.
    pub enumeration: Option<Vec<ActiveChoiceBound>>,
}

impl DegenerateReport {
    /// Largest `(ℓ_x, ℓ_lm)` over the enumerated choices.
    pub fn enumerated_max(&self) -> Option<(f64, f64)> {
        self.enumeration.as_ref().map(|all| {
            all.iter()
                .fold((0.0_f64, 0.0_f64), |(a, b), c| (a.max(c.ell_x), b.max(c.ell_lm)))
        })
    }
}

/// Largest number of weakly active rows the enumeration will expand.
pub const MAX_ENUMERATED_WEAK: usize = 8;

/// Bound valid without strict complementarity: the local bound with every
/// active row (strongly and weakly) included, which dominates every other
/// admissible row choice. `enumerate` additionally evaluates all choices
/// `Iˢ ⊆ R ⊆ I` as a cross-check.
pub fn degenerate_lipschitz_bounds(
    prob: &dyn ParametricProgram,
    point: &KktTriple,
    tol: &KktTolerances,
    enumerate: bool,
) -> Result<DegenerateReport, SensitivityError> {
    let class = classify_active_set(prob, point, tol.eps_act, tol.eps_strong)?;
    let blocks = assemble_blocks(prob, point, &class.active, tol)?;
    let report = local_with_mode(&blocks, BoundMode::Degenerate);

    let enumeration = if enumerate {
        let weak = &class.weakly_active;
        if weak.len() > MAX_ENUMERATED_WEAK {
            return Err(SensitivityError::TooManyWeaklyActive(weak.len()));
        }
        let mut all = Vec::with_capacity(1 << weak.len());
        for mask in 0u32..(1u32 << weak.len()) {
            let mut rows = class.strongly_active.clone();
            rows.extend(
                weak.iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, &i)| i),
            );
            rows.sort_unstable();
            let b = assemble_blocks(prob, point, &rows, tol)?;
            let rep = local_lipschitz_bounds(&b);
            all.push(ActiveChoiceBound {
                rows,
                ell_x: rep.ell_x,
                ell_lm: rep.ell_lm,
            });
        }
        Some(all)
    } else {
        None
    };
    Ok(DegenerateReport {
        report,
        enumeration,
    })
}

fn require_positive(name: &'static str, v: f64) -> Result<(), SensitivityError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SensitivityError::MissingConstant(name))
    }
}

fn require_nonnegative(name: &'static str, v: f64) -> Result<(), SensitivityError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SensitivityError::MissingConstant(name))
    }
}

/// Uniform bound from problem-wide constants:
///
/// ```text
/// ℓ_x = √((β + Σζᵢℓᵢ)/α) · (L̄/α + Ḡ/ω)
/// ℓ_μ = (β + Σζᵢℓᵢ)^{3/2} / (α^{1/2} ω) · (L̄/α + Ḡ/ω)
/// ```
///
/// `omega = None` means no constraints; the `Ḡ` term and `ℓ_μ` vanish.
pub fn global_lipschitz_bounds(
    alpha: f64,
    beta: f64,
    zeta: &[f64],
    ell_g: &[f64],
    omega: Option<f64>,
    lbar: f64,
    gbar: f64,
) -> Result<LipschitzBoundReport, SensitivityError> {
    require_positive("alpha", alpha)?;
    require_positive("beta", beta)?;
    require_nonnegative("lbar", lbar)?;
    require_nonnegative("gbar", gbar)?;
    if zeta.len() != ell_g.len() {
        return Err(SensitivityError::MissingConstant("zeta/ell_g length"));
    }
    for (&z, &l) in zeta.iter().zip(ell_g) {
        require_nonnegative("zeta", z)?;
        require_nonnegative("ell_g", l)?;
    }
    match omega {
        Some(w) => require_positive("omega", w)?,
        None if gbar > 0.0 => return Err(SensitivityError::MissingConstant("omega")),
        None => {}
    }
    Ok(LipschitzBoundReport::from_constants(
        BoundConstants::Global {
            alpha,
            beta,
            zeta: zeta.to_vec(),
            ell_g: ell_g.to_vec(),
            omega,
            lbar,
            gbar,
        },
        BoundMode::Global,
    ))
}

/// Inputs for [`special_case_bound`]; each case reads only what it needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecialConstants {
    pub ell_f: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub omega: Option<f64>,
    pub ell_c: Option<f64>,
    pub ell_v: Option<f64>,
    /// Constraint terms for the translational case.
    pub zeta: Vec<f64>,
    pub ell_g: Vec<f64>,
    pub gbar: Option<f64>,
}

fn need(name: &'static str, v: Option<f64>) -> Result<f64, SensitivityError> {
    v.ok_or(SensitivityError::MissingConstant(name))
}

pub fn special_case_bound(
    case_tag: &str,
    c: &SpecialConstants,
) -> Result<LipschitzBoundReport, SensitivityError> {
    let case: SpecialCase = case_tag.parse()?;
    let mode = BoundMode::Special(case);
    let constants = match case {
        SpecialCase::Unconstrained => {
            let ell_f = need("ell_f", c.ell_f)?;
            let alpha = need("alpha", c.alpha)?;
            require_positive("alpha", alpha)?;
            require_nonnegative("ell_f", ell_f)?;
            BoundConstants::Unconstrained { ell_f, alpha }
        }
        SpecialCase::Translational => {
            let beta = need("beta", c.beta)?;
            let ell_c = need("ell_c", c.ell_c)?;
            require_nonnegative("ell_c", ell_c)?;
            let mut rep = global_lipschitz_bounds(
                need("alpha", c.alpha)?,
                beta,
                &c.zeta,
                &c.ell_g,
                c.omega,
                beta * ell_c,
                c.gbar.unwrap_or(0.0),
            )?;
            rep.mode = mode;
            return Ok(rep);
        }
        SpecialCase::Linear => {
            let (alpha, beta, omega, ell_v) = (
                need("alpha", c.alpha)?,
                need("beta", c.beta)?,
                need("omega", c.omega)?,
                need("ell_v", c.ell_v)?,
            );
            require_positive("alpha", alpha)?;
            require_positive("beta", beta)?;
            require_positive("omega", omega)?;
            require_nonnegative("ell_v", ell_v)?;
            BoundConstants::Linear {
                alpha,
                beta,
                omega,
                ell_v,
            }
        }
        SpecialCase::Composite => {
            let (alpha, beta, omega, ell_c, ell_v) = (
                need("alpha", c.alpha)?,
                need("beta", c.beta)?,
                need("omega", c.omega)?,
                need("ell_c", c.ell_c)?,
                need("ell_v", c.ell_v)?,
            );
            require_positive("alpha", alpha)?;
            require_positive("beta", beta)?;
            require_positive("omega", omega)?;
            require_nonnegative("ell_c", ell_c)?;
            require_nonnegative("ell_v", ell_v)?;
            BoundConstants::Composite {
                alpha,
                beta,
                omega,
                ell_c,
                ell_v,
            }
        }
    };
    Ok(LipschitzBoundReport::from_constants(constants, mode))
}

/// Per-sample bounds and empirical difference quotients along a parameter
/// path.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub solutions: Vec<KktTriple>,
    /// Weakly-active-safe local bound at each sample.
    pub reports: Vec<LipschitzBoundReport>,
    /// `‖x*(ξᵢ₊₁) − x*(ξᵢ)‖ / ‖ξᵢ₊₁ − ξᵢ‖`; zero when both differences vanish.
    pub ratios: Vec<f64>,
    /// Largest bound seen on the path.
    pub path_max: f64,
}

impl SweepResult {
    /// `max(ℓ_x(ξᵢ), ℓ_x(ξᵢ₊₁))` for each segment.
    pub fn segment_bounds(&self) -> Vec<f64> {
        self.reports
            .windows(2)
            .map(|w| w[0].ell_x.max(w[1].ell_x))
            .collect()
    }
}

pub fn lipschitz_sweep(
    prob: &dyn ParametricProgram,
    xi_path: &[Vec<f64>],
    solve: &SolveOptions,
    tol: &KktTolerances,
) -> Result<SweepResult, SensitivityError> {
    let per_sample: Vec<Result<(KktTriple, LipschitzBoundReport), SensitivityError>> = xi_path
        .par_iter()
        .map(|xi| {
            let sol = solve_instance(prob, xi, None, solve)?;
            let rep = degenerate_lipschitz_bounds(prob, &sol, tol, false)?.report;
            Ok((sol, rep))
        })
        .collect();
    let mut solutions = Vec::with_capacity(xi_path.len());
    let mut reports = Vec::with_capacity(xi_path.len());
    for item in per_sample {
        let (s, r) = item?;
        solutions.push(s);
        reports.push(r);
    }
    let mut ratios = Vec::with_capacity(xi_path.len().saturating_sub(1));
    for (k, w) in solutions.windows(2).enumerate() {
        let dxi = norm2(&crate::linalg::sub(&xi_path[k + 1], &xi_path[k]));
        let dx = norm2(&crate::linalg::sub(&w[1].x, &w[0].x));
        if dxi == 0.0 {
            if dx != 0.0 {
                return Err(SensitivityError::RepeatedSample(k));
            }
            ratios.push(0.0);
        } else {
            ratios.push(dx / dxi);
        }
    }
    let path_max = reports.iter().fold(0.0_f64, |a, r| a.max(r.ell_x));
    Ok(SweepResult {
        solutions,
        reports,
        ratios,
        path_max,
    })
}
