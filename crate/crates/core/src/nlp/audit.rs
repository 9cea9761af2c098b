//! Sampled estimates of the constants the global bounds depend on.

use rayon::prelude::*;

use super::kkt::{active_jacobian, classify_values, KktTolerances};
use super::qp::{solve_qp, QpOptions};
use super::{solve_instance, Evaluator, NlpError, ParametricProgram, QuadraticData, SolveOptions};
use crate::linalg::{singular_values, symmetric_eigen, Matrix};

/// Inputs for bounding the inequality multipliers.
#[derive(Debug, Clone, PartialEq)]
pub enum DualCertificate {
    /// Strictly feasible points `x̃` (one per sample, or one shared) and a
    /// lower bound on the optimal value. Gives
    /// `ζ_i = (f(x̃, ξ) − f_lower) / (−g_i(x̃, ξ))`.
    Slater { points: Vec<Vec<f64>>, f_lower: f64 },
    /// Uniform gradient bounds `‖∇f‖ ≤ B_f`, `‖∇g_i‖ ≥ B_{g_i}`, giving
    /// `ζ_i = B_f / B_{g_i}`.
    GradientBounds { b_f: f64, b_g: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub dual: Option<DualCertificate>,
    /// Enumerate faces of linear constraint sets (up to 16 inequalities).
    pub enumerate_faces: bool,
    pub solve: SolveOptions,
    pub tolerances: KktTolerances,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            dual: None,
            enumerate_faces: true,
            solve: SolveOptions::default(),
            tolerances: KktTolerances::default(),
        }
    }
}

/// Sampled constants. Every value here is an estimate over the supplied
/// samples, not a proof over the whole parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub samples: usize,
    /// Smallest eigenvalue of `∇²_xx f` over sampled optimizers.
    pub alpha_hat: f64,
    /// Largest eigenvalue of `∇²_xx f` over sampled optimizers.
    pub beta_hat: f64,
    /// Per inequality, largest `‖∇²_xx g_i‖` seen.
    pub ell_hat: Vec<f64>,
    /// Smallest `σ_min` of the active-constraint Jacobian at the sampled
    /// optimizers; `None` when nothing was ever active.
    pub omega_hat: Option<f64>,
    /// For linear constraints: smallest `σ_min` over every nonempty face of
    /// the feasible set at the sampled parameters.
    pub omega_faces: Option<f64>,
    pub zeta_hat: Option<Vec<f64>>,
    /// Largest `‖∇²_{ξx} L‖` at the sampled optimizers.
    pub lstar_sup: f64,
    /// Largest `‖[∇_ξ h; ∇_ξ g_I]‖` at the sampled optimizers.
    pub gstar_sup: f64,
    pub linear_constraints: bool,
    pub violations: Vec<String>,
    pub fd_used: bool,
}

impl AuditReport {
    pub fn label(&self) -> &'static str {
        "sampled"
    }
}

struct SampleOutcome {
    alpha: f64,
    beta: f64,
    ell: Vec<f64>,
    omega: Option<f64>,
    lstar: f64,
    gstar: f64,
    curved: bool,
    faces: Option<(f64, Vec<String>)>,
    violations: Vec<String>,
    fd_used: bool,
}

pub fn audit_assumptions(
    prob: &dyn ParametricProgram,
    xi_samples: &[Vec<f64>],
    opts: &AuditOptions,
) -> Result<AuditReport, NlpError> {
    if xi_samples.is_empty() {
        return Err(NlpError::DimensionMismatch {
            what: "xi_samples",
            expected: 1,
            found: 0,
        });
    }
    let dims = prob.dims();

    let outcomes: Vec<Result<SampleOutcome, NlpError>> = xi_samples
        .par_iter()
        .map(|xi| audit_sample(prob, xi, opts))
        .collect();

    let mut report = AuditReport {
        samples: xi_samples.len(),
        alpha_hat: f64::INFINITY,
        beta_hat: 0.0,
        ell_hat: vec![0.0; dims.m],
        omega_hat: None,
        omega_faces: None,
        zeta_hat: None,
        lstar_sup: 0.0,
        gstar_sup: 0.0,
        linear_constraints: true,
        violations: Vec::new(),
        fd_used: false,
    };
    for (xi, outcome) in xi_samples.iter().zip(outcomes) {
        let o = match outcome {
            Ok(o) => o,
            Err(NlpError::InfeasibleProblem { .. }) => {
                report
                    .violations
                    .push(format!("feasible set empty at xi = {xi:?}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        report.alpha_hat = report.alpha_hat.min(o.alpha);
        report.beta_hat = report.beta_hat.max(o.beta);
        for (a, b) in report.ell_hat.iter_mut().zip(&o.ell) {
            *a = a.max(*b);
        }
        if let Some(w) = o.omega {
            report.omega_hat = Some(report.omega_hat.map_or(w, |v: f64| v.min(w)));
        }
        if let Some((w, v)) = o.faces {
            report.omega_faces = Some(report.omega_faces.map_or(w, |c: f64| c.min(w)));
            report.violations.extend(v);
        }
        report.lstar_sup = report.lstar_sup.max(o.lstar);
        report.gstar_sup = report.gstar_sup.max(o.gstar);
        report.linear_constraints &= !o.curved;
        report.violations.extend(o.violations);
        report.fd_used |= o.fd_used;
    }
    if !report.alpha_hat.is_finite() {
        report.alpha_hat = 0.0;
    }

    report.zeta_hat = match &opts.dual {
        Some(DualCertificate::GradientBounds { b_f, b_g }) => {
            if b_g.len() != dims.m {
                return Err(NlpError::DimensionMismatch {
                    what: "b_g",
                    expected: dims.m,
                    found: b_g.len(),
                });
            }
            Some(b_g.iter().map(|bg| b_f / bg).collect())
        }
        Some(DualCertificate::Slater { points, f_lower }) => {
            Some(slater_zeta(prob, xi_samples, points, *f_lower, &mut report.violations)?)
        }
        None if dims.m > 0 && !report.linear_constraints => return Err(NlpError::MissingCertificates),
        None => None,
    };
    Ok(report)
}

fn slater_zeta(
    prob: &dyn ParametricProgram,
    xi_samples: &[Vec<f64>],
    points: &[Vec<f64>],
    f_lower: f64,
    violations: &mut Vec<String>,
) -> Result<Vec<f64>, NlpError> {
    let m = prob.dims().m;
    if points.len() != 1 && points.len() != xi_samples.len() {
        return Err(NlpError::DimensionMismatch {
            what: "slater points",
            expected: xi_samples.len(),
            found: points.len(),
        });
    }
    let mut zeta = vec![0.0_f64; m];
    for (k, xi) in xi_samples.iter().enumerate() {
        let x = if points.len() == 1 { &points[0] } else { &points[k] };
        let g = prob.inequalities(x, xi);
        let gap = prob.objective(x, xi) - f_lower;
        for i in 0..m {
            if g[i] < 0.0 {
                zeta[i] = zeta[i].max(gap / -g[i]);
            } else {
                violations.push(format!(
                    "certificate point is not strictly feasible for inequality {i} at xi = {xi:?}"
                ));
                zeta[i] = f64::INFINITY;
            }
        }
    }
    Ok(zeta)
}

fn audit_sample(
    prob: &dyn ParametricProgram,
    xi: &[f64],
    opts: &AuditOptions,
) -> Result<SampleOutcome, NlpError> {
    let dims = prob.dims();
    let ev = Evaluator::new(prob);
    let sol = solve_instance(prob, xi, None, &opts.solve)?;
    let x = &sol.x;
    let mut violations = Vec::new();

    let (vals, _) = symmetric_eigen(&ev.hess_f(x, xi)?);
    let alpha = vals.first().copied().unwrap_or(0.0);
    let beta = vals.last().copied().unwrap_or(0.0);
    if alpha <= 0.0 {
        violations.push(format!("objective Hessian not positive definite at xi = {xi:?}"));
    }

    let mut ell = Vec::with_capacity(dims.m);
    for i in 0..dims.m {
        ell.push(ev.hess_g(i, x, xi)?.norm2());
    }
    let mut curved = ell.iter().any(|&v| v > 1e-12);
    for i in 0..dims.p {
        curved |= ev.hess_h(i, x, xi)?.max_abs() > 1e-12;
    }

    let g = prob.inequalities(x, xi);
    let tol = &opts.tolerances;
    let g_clamped: Vec<f64> = g.iter().map(|v| v.min(tol.eps_act)).collect();
    let class = classify_values(&g_clamped, &sol.mu, tol.eps_act, tol.eps_strong)?;
    let b = active_jacobian(&ev, x, xi, &class.active)?;
    let omega = if b.rows() == 0 {
        None
    } else if b.rows() > dims.n {
        violations.push(format!("more active constraints than variables at xi = {xi:?}"));
        Some(0.0)
    } else {
        Some(*singular_values(&b).last().unwrap_or(&0.0))
    };

    let lstar = ev.cross_lagrangian(x, xi, &sol.lambda, &sol.mu)?.norm2();
    let gstar = ev
        .param_jac_h(x, xi)?
        .vstack(&ev.param_jac_g(x, xi)?.select_rows(&class.active))?
        .norm2();

    let faces = if opts.enumerate_faces && !curved && dims.m > 0 && dims.m <= 16 {
        let data = linear_data(prob, &ev, xi)?;
        Some(face_sigma(&data, xi))
    } else {
        None
    };

    Ok(SampleOutcome {
        alpha,
        beta,
        ell,
        omega,
        lstar,
        gstar,
        curved,
        faces,
        violations,
        fd_used: ev.fd_used(),
    })
}

/// Affine constraint data at `xi`, taken from the QP view when available and
/// otherwise from values and Jacobians at the origin.
fn linear_data(prob: &dyn ParametricProgram, ev: &Evaluator<'_>, xi: &[f64]) -> Result<QuadraticData, NlpError> {
    if let Some(q) = prob.as_quadratic(xi) {
        return Ok(q);
    }
    let n = prob.dims().n;
    let zero = vec![0.0; n];
    Ok(QuadraticData {
        g: Matrix::identity(n),
        a: zero.clone(),
        c: ev.jac_h(&zero, xi)?,
        d: prob.equalities(&zero, xi).iter().map(|v| -v).collect(),
        u: ev.jac_g(&zero, xi)?,
        v: prob.inequalities(&zero, xi).iter().map(|v| -v).collect(),
    })
}

/// Minimum `σ_min([C; U_S])` over every nonempty face `{Cx = d, U_S x = v_S,
/// U x ≤ v}`. Faces with more rows than variables that are still nonempty
/// are reported as LICQ violations.
pub(crate) fn face_sigma(data: &QuadraticData, xi: &[f64]) -> (f64, Vec<String>) {
    let n = data.g.rows();
    let p = data.c.rows();
    let m = data.u.rows();
    let mut best = f64::INFINITY;
    let mut violations = Vec::new();
    if p > 0 {
        best = best.min(*singular_values(&data.c).last().unwrap_or(&0.0));
    }
    for mask in 1u32..(1u32 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if !face_nonempty(data, &rows) {
            continue;
        }
        let stacked = data
            .c
            .vstack(&data.u.select_rows(&rows))
            .expect("constraint rows share the decision dimension");
        if stacked.rows() > n {
            violations.push(format!(
                "inequalities {rows:?} meet at a point with more rows than variables at xi = {xi:?}"
            ));
            best = 0.0;
            continue;
        }
        best = best.min(*singular_values(&stacked).last().unwrap_or(&0.0));
    }
    (best, violations)
}

fn face_nonempty(data: &QuadraticData, rows: &[usize]) -> bool {
    let n = data.g.rows();
    let rest: Vec<usize> = (0..data.u.rows()).filter(|i| !rows.contains(i)).collect();
    let face = QuadraticData {
        g: Matrix::identity(n),
        a: vec![0.0; n],
        c: data
            .c
            .vstack(&data.u.select_rows(rows))
            .expect("constraint rows share the decision dimension"),
        d: data
            .d
            .iter()
            .copied()
            .chain(rows.iter().map(|&i| data.v[i]))
            .collect(),
        u: data.u.select_rows(&rest),
        v: rest.iter().map(|&i| data.v[i]).collect(),
    };
    match solve_qp(&face, &QpOptions::default()) {
        Ok(sol) => {
            // The dual method can stop on a nearly dependent system; confirm
            // the returned point really lies on the face.
            let eq_ok = (0..face.c.rows())
                .all(|i| (crate::linalg::dot(face.c.row(i), &sol.x) - face.d[i]).abs() <= 1e-9 * (1.0 + face.d[i].abs()));
            let ineq_ok = (0..face.u.rows())
                .all(|i| crate::linalg::dot(face.u.row(i), &sol.x) - face.v[i] <= 1e-9 * (1.0 + face.v[i].abs()));
            eq_ok && ineq_ok
        }
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{ClosureProgram, ParametricQp};

    #[test]
    fn quadratic_constants() {
        let q = Matrix::from_rows(&[[12.0, -8.0], [-8.0, 10.0]]);
        let prob = ParametricQp::unconstrained(q.scale(2.0), vec![0.0; 2], Matrix::zeros(2, 1));
        let rep = audit_assumptions(&prob, &[vec![0.0]], &AuditOptions::default()).unwrap();
        let disc = 260.0_f64.sqrt();
        assert!((rep.alpha_hat - (22.0 - disc)).abs() < 1e-12);
        assert!((rep.beta_hat - (22.0 + disc)).abs() < 1e-12);
        assert!(rep.omega_hat.is_none());
        assert_eq!(rep.label(), "sampled");
    }

    #[test]
    fn slater_quotient() {
        // f = x², g = x − 1; x̃ = −... chosen so g(x̃) = −1 and f(x̃) = 5.
        let x_tilde = -(5.0_f64.sqrt());
        let prob = ClosureProgram::new(1, 0, |x, _| x[0] * x[0])
            .with_gradient(|x, _| vec![2.0 * x[0]])
            .with_hessian(|_, _| Matrix::from_diag(&[2.0]))
            .with_inequalities(1, move |x, _| vec![(x[0] - x_tilde).powi(2) / 4.0 - 1.0])
            .with_inequality_jacobian(move |x, _| Matrix::from_rows(&[[(x[0] - x_tilde) / 2.0]]))
            .with_inequality_hessian(|_, _, _| Matrix::from_diag(&[0.5]));
        let opts = AuditOptions {
            dual: Some(DualCertificate::Slater {
                points: vec![vec![x_tilde]],
                f_lower: 0.0,
            }),
            ..AuditOptions::default()
        };
        let rep = audit_assumptions(&prob, &[vec![]], &opts).unwrap();
        assert!((rep.zeta_hat.unwrap()[0] - 5.0).abs() < 1e-12);
        assert!(!rep.linear_constraints);

        let err = audit_assumptions(&prob, &[vec![]], &AuditOptions::default()).unwrap_err();
        assert!(matches!(err, NlpError::MissingCertificates));
    }

    #[test]
    fn faces_of_a_box() {
        let u = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0]]);
        let prob = ParametricQp::unconstrained(Matrix::identity(2), vec![0.0; 2], Matrix::zeros(2, 0))
            .with_inequalities(u, vec![1.0, 1.0, 1.0], Matrix::zeros(3, 0));
        let rep = audit_assumptions(&prob, &[vec![]], &AuditOptions::default()).unwrap();
        // Faces: each single row, and the vertices {0,2}, {1,2}; {0,1} is
        // empty. Smallest σ_min is 1 (rows 0 or 1 alone, or with row 2).
        assert!((rep.omega_faces.unwrap() - 1.0).abs() < 1e-12);
        assert!(rep.violations.is_empty());
        assert!(rep.linear_constraints);
    }
}
