use super::{Evaluator, NlpError, ParametricProgram};
use crate::linalg::{null_space, singular_values, symmetric_eigen, LinalgOptions, Matrix};

/// Primal-dual point `(x, λ, μ)` at parameter `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktTriple {
    pub xi: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl KktTriple {
    /// Equality and inequality multipliers stacked as `(λ, μ)`.
    pub fn multipliers(&self) -> Vec<f64> {
        self.lambda.iter().chain(&self.mu).copied().collect()
    }
}

/// Tolerances for active-set classification and regularity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktTolerances {
    /// `g_i ≥ −eps_act` counts as active; `g_i > eps_act` is infeasible.
    pub eps_act: f64,
    /// `μ_i > eps_strong` counts as strongly active.
    pub eps_strong: f64,
    /// Largest KKT residual (∞-norm) accepted at a regular minimizer.
    pub kkt_tol: f64,
    pub linalg: LinalgOptions,
}

impl Default for KktTolerances {
    fn default() -> Self {
        Self {
            eps_act: 1e-7,
            eps_strong: 1e-8,
            kkt_tol: 1e-8,
            linalg: LinalgOptions::default(),
        }
    }
}

fn check_dims(prob: &dyn ParametricProgram, point: &KktTriple) -> Result<(), NlpError> {
    let d = prob.dims();
    let pairs = [
        ("x", point.x.len(), d.n),
        ("xi", point.xi.len(), d.r),
        ("lambda", point.lambda.len(), d.p),
        ("mu", point.mu.len(), d.m),
    ];
    for (what, found, expected) in pairs {
        if found != expected {
            return Err(NlpError::DimensionMismatch {
                what,
                expected,
                found,
            });
        }
    }
    Ok(())
}

/// `[∇_x L; h; diag(μ) g]`, length `n + p + m`.
pub fn kkt_residual(prob: &dyn ParametricProgram, point: &KktTriple) -> Result<Vec<f64>, NlpError> {
    check_dims(prob, point)?;
    let ev = Evaluator::new(prob);
    kkt_residual_with(&ev, point)
}

pub(crate) fn kkt_residual_with(ev: &Evaluator<'_>, point: &KktTriple) -> Result<Vec<f64>, NlpError> {
    let prob = ev.program();
    let (x, xi) = (&point.x, &point.xi);
    let mut stat = ev.grad_f(x, xi)?;
    let jh = ev.jac_h(x, xi)?;
    let jg = ev.jac_g(x, xi)?;
    for (s, v) in stat.iter_mut().zip(jh.tr_mul_vec(&point.lambda)) {
        *s += v;
    }
    for (s, v) in stat.iter_mut().zip(jg.tr_mul_vec(&point.mu)) {
        *s += v;
    }
    let h = prob.equalities(x, xi);
    let g = prob.inequalities(x, xi);
    stat.extend(h);
    stat.extend(g.iter().zip(&point.mu).map(|(gi, mi)| gi * mi));
    Ok(stat)
}

/// Partition of the inequality indices at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSetClassification {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    pub strongly_active: Vec<usize>,
    pub weakly_active: Vec<usize>,
    pub eps_act: f64,
    pub eps_strong: f64,
}

impl ActiveSetClassification {
    /// Strict complementary slackness: no weakly active constraint.
    pub fn scs(&self) -> bool {
        self.weakly_active.is_empty()
    }
}

pub fn classify_active_set(
    prob: &dyn ParametricProgram,
    point: &KktTriple,
    eps_act: f64,
    eps_strong: f64,
) -> Result<ActiveSetClassification, NlpError> {
    check_dims(prob, point)?;
    let g = prob.inequalities(&point.x, &point.xi);
    classify_values(&g, &point.mu, eps_act, eps_strong)
}

pub(crate) fn classify_values(
    g: &[f64],
    mu: &[f64],
    eps_act: f64,
    eps_strong: f64,
) -> Result<ActiveSetClassification, NlpError> {
    if let Some((index, &value)) = g
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > eps_act)
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        return Err(NlpError::Infeasible { index, value });
    }
    let mut out = ActiveSetClassification {
        active: Vec::new(),
        inactive: Vec::new(),
        strongly_active: Vec::new(),
        weakly_active: Vec::new(),
        eps_act,
        eps_strong,
    };
    for (i, &gi) in g.iter().enumerate() {
        if gi >= -eps_act {
            out.active.push(i);
            if mu[i] > eps_strong {
                out.strongly_active.push(i);
            } else {
                out.weakly_active.push(i);
            }
        } else {
            out.inactive.push(i);
        }
    }
    Ok(out)
}

/// Outcome of the LICQ / SSOSC / SCS checks at a KKT point.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub licq: bool,
    /// `σ_min` of the stacked active gradients; `None` when no constraint is
    /// active (LICQ holds vacuously).
    pub licq_sigma_min: Option<f64>,
    pub ssosc: bool,
    /// Smallest eigenvalue of the reduced Hessian; `None` when the critical
    /// subspace is trivial.
    pub ssosc_min_eig: Option<f64>,
    pub scs: bool,
    /// ∞-norm of the KKT residual.
    pub kkt_residual: f64,
    /// Residual within tolerance, `μ ≥ 0` and `g ≤ eps_act`.
    pub kkt_ok: bool,
    pub is_regular_minimizer: bool,
    pub classification: ActiveSetClassification,
    /// Some derivative was approximated by finite differences.
    pub fd_used: bool,
}

pub fn check_regularity(
    prob: &dyn ParametricProgram,
    point: &KktTriple,
    tol: &KktTolerances,
) -> Result<RegularityReport, NlpError> {
    check_dims(prob, point)?;
    let ev = Evaluator::new(prob);
    let (x, xi) = (&point.x, &point.xi);
    let n = prob.dims().n;

    let residual = kkt_residual_with(&ev, point)?;
    let kkt_residual = crate::linalg::norm_inf(&residual);
    let g = prob.inequalities(x, xi);
    let feasible = g.iter().all(|&v| v <= tol.eps_act);
    let dual_feasible = point.mu.iter().all(|&m| m >= -tol.kkt_tol);
    let kkt_ok = kkt_residual <= tol.kkt_tol && feasible && dual_feasible;

    // Classification needs feasibility; clamp so an infeasible point still
    // gets a report (with kkt_ok = false) instead of an error.
    let g_clamped: Vec<f64> = g.iter().map(|&v| v.min(tol.eps_act)).collect();
    let classification = classify_values(&g_clamped, &point.mu, tol.eps_act, tol.eps_strong)?;

    let jh = ev.jac_h(x, xi)?;
    let jg = ev.jac_g(x, xi)?;
    let b_active = jh.vstack(&jg.select_rows(&classification.active))?;
    let (licq, licq_sigma_min) = if b_active.rows() == 0 {
        (true, None)
    } else {
        let sv = singular_values(&b_active);
        let smin = if b_active.rows() > n { 0.0 } else { sv[sv.len() - 1] };
        (smin > tol.linalg.rank_tol * sv[0].max(1.0), Some(smin))
    };

    let b_strong = jh.vstack(&jg.select_rows(&classification.strongly_active))?;
    let z = null_space(&b_strong, n, 1e-12)?;
    let hess = ev.hess_lagrangian(x, xi, &point.lambda, &point.mu)?;
    let (ssosc, ssosc_min_eig) = if z.cols() == 0 {
        (true, None)
    } else {
        let reduced = &(&z.transpose() * &hess) * &z;
        let (vals, _) = symmetric_eigen(&reduced);
        let scale = hess.max_abs().max(1.0);
        (vals[0] > 1e-12 * scale, Some(vals[0]))
    };

    Ok(RegularityReport {
        licq,
        licq_sigma_min,
        ssosc,
        ssosc_min_eig,
        scs: classification.scs(),
        kkt_residual,
        kkt_ok,
        is_regular_minimizer: licq && ssosc && kkt_ok,
        classification,
        fd_used: ev.fd_used(),
    })
}

/// Stacks `[∇_x h; ∇_x g_R]` at `x`.
pub(crate) fn active_jacobian(
    ev: &Evaluator<'_>,
    x: &[f64],
    xi: &[f64],
    rows: &[usize],
) -> Result<Matrix, NlpError> {
    Ok(ev.jac_h(x, xi)?.vstack(&ev.jac_g(x, xi)?.select_rows(rows))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nlp::{ClosureProgram, ParametricQp};

    fn clipped() -> ParametricQp {
        // ½(x−1)² s.t. x ≤ 0, written as ½x² − x + const.
        ParametricQp::unconstrained(Matrix::identity(1), vec![-1.0], Matrix::zeros(1, 0))
            .with_inequalities(Matrix::identity(1), vec![0.0], Matrix::zeros(1, 0))
    }

    fn point(x: f64, mu: f64) -> KktTriple {
        KktTriple {
            xi: vec![],
            x: vec![x],
            lambda: vec![],
            mu: vec![mu],
        }
    }

    #[test]
    fn residual_vanishes_at_unconstrained_minimum() {
        let prob = ParametricQp::unconstrained(Matrix::identity(2), vec![0.0; 2], Matrix::zeros(2, 0));
        let p = KktTriple {
            xi: vec![],
            x: vec![0.0, 0.0],
            lambda: vec![],
            mu: vec![],
        };
        assert_eq!(kkt_residual(&prob, &p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn residual_at_clipped_minimum() {
        let prob = clipped();
        assert_eq!(kkt_residual(&prob, &point(0.0, 1.0)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(kkt_residual(&prob, &point(0.0, 0.0)).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn residual_rejects_wrong_dimensions() {
        let prob = clipped();
        let mut p = point(0.0, 1.0);
        p.mu.push(0.0);
        assert!(matches!(
            kkt_residual(&prob, &p),
            Err(NlpError::DimensionMismatch { what: "mu", .. })
        ));
    }

    fn two_sided() -> ClosureProgram {
        ClosureProgram::new(1, 0, |x, _| 0.5 * x[0] * x[0])
            .with_inequalities(2, |x, _| vec![x[0] - 1.0, -x[0] - 1.0])
    }

    #[test]
    fn classification_examples() {
        let prob = two_sided();
        let mut p = KktTriple {
            xi: vec![],
            x: vec![1.0],
            lambda: vec![],
            mu: vec![0.5, 0.0],
        };
        let c = classify_active_set(&prob, &p, 1e-7, 1e-6).unwrap();
        assert_eq!(c.active, vec![0]);
        assert_eq!(c.inactive, vec![1]);
        assert_eq!(c.strongly_active, vec![0]);
        assert!(c.scs());

        p.mu[0] = 0.0;
        let c = classify_active_set(&prob, &p, 1e-7, 1e-6).unwrap();
        assert_eq!(c.weakly_active, vec![0]);
        assert!(!c.scs());

        p.x[0] = 1.5;
        assert!(matches!(
            classify_active_set(&prob, &p, 1e-7, 1e-6),
            Err(NlpError::Infeasible { index: 0, .. })
        ));
    }

    #[test]
    fn regularity_of_unconstrained_minimum() {
        let prob = ParametricQp::unconstrained(Matrix::identity(2), vec![1.0, -1.0], Matrix::zeros(2, 0));
        let p = KktTriple {
            xi: vec![],
            x: vec![-1.0, 1.0],
            lambda: vec![],
            mu: vec![],
        };
        let rep = check_regularity(&prob, &p, &KktTolerances::default()).unwrap();
        assert!(rep.licq && rep.licq_sigma_min.is_none());
        assert!(rep.ssosc && rep.is_regular_minimizer);
    }

    #[test]
    fn duplicated_active_row_breaks_licq() {
        let u = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]);
        let prob = ParametricQp::unconstrained(Matrix::identity(2), vec![-1.0, 0.0], Matrix::zeros(2, 0))
            .with_inequalities(u, vec![0.0, 0.0], Matrix::zeros(2, 0));
        let p = KktTriple {
            xi: vec![],
            x: vec![0.0, 0.0],
            lambda: vec![],
            mu: vec![0.5, 0.5],
        };
        let rep = check_regularity(&prob, &p, &KktTolerances::default()).unwrap();
        assert!(!rep.licq);
        assert!(rep.licq_sigma_min.unwrap() < 1e-12);
        assert!(!rep.is_regular_minimizer);
    }

    #[test]
    fn classification_is_idempotent() {
        let prob = two_sided();
        let p = KktTriple {
            xi: vec![],
            x: vec![1.0],
            lambda: vec![],
            mu: vec![1.0, 0.0],
        };
        let a = classify_active_set(&prob, &p, 1e-7, 1e-8).unwrap();
        let b = classify_active_set(&prob, &p, 1e-7, 1e-8).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.active.iter().chain(&a.inactive).copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1]);
    }
}
