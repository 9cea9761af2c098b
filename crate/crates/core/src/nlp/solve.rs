//! Instance solver: exact dual active-set for QPs, primal-dual interior point
//! with an active-set Newton polish for everything else.

use super::kkt::{kkt_residual_with, KktTriple};
use super::qp::{solve_qp, QpOptions};
use super::{Dims, Evaluator, NlpError, ParametricProgram};
use crate::linalg::{dot, norm_inf, Cholesky, Matrix, PivotedQr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Required ∞-norm of the KKT residual on return.
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Phase-1 optimal value above which the feasible set is declared empty.
    pub phase1_tol: f64,
    pub qp: QpOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-9,
            max_iter: 200,
            phase1_tol: 1e-7,
            qp: QpOptions::default(),
        }
    }
}

/// Solves the program at `xi`. QPs with a positive definite Hessian go to the
/// dual active-set solver; everything else to the interior-point method,
/// optionally warm started. A run that fails to converge triggers a phase-1
/// feasibility problem so an empty feasible set is reported as
/// [`NlpError::InfeasibleProblem`].
///
/// The returned triple always has KKT residual `≤ opts.kkt_tol`; regularity
/// is left to [`check_regularity`](super::check_regularity).
pub fn solve_instance(
    prob: &dyn ParametricProgram,
    xi: &[f64],
    warm_start: Option<&KktTriple>,
    opts: &SolveOptions,
) -> Result<KktTriple, NlpError> {
    let dims = prob.dims();
    if xi.len() != dims.r {
        return Err(NlpError::DimensionMismatch {
            what: "xi",
            expected: dims.r,
            found: xi.len(),
        });
    }
    let ev = Evaluator::new(prob);

    if let Some(data) = prob.as_quadratic(xi) {
        if Cholesky::new(&data.g).is_ok() {
            let sol = solve_qp(&data, &opts.qp)?;
            let triple = KktTriple {
                xi: xi.to_vec(),
                x: sol.x,
                lambda: sol.lambda,
                mu: sol.mu,
            };
            return verified(&ev, triple, opts, sol.iterations);
        }
    }

    match interior_point(&ev, xi, warm_start, opts) {
        Ok((triple, iters)) => verified(&ev, triple, opts, iters),
        Err(err) => {
            let t = phase1_value(prob, xi, opts)?;
            if t > opts.phase1_tol {
                Err(NlpError::InfeasibleProblem { phase1_value: t })
            } else {
                Err(err)
            }
        }
    }
}

fn verified(
    ev: &Evaluator<'_>,
    triple: KktTriple,
    opts: &SolveOptions,
    iterations: usize,
) -> Result<KktTriple, NlpError> {
    let residual = norm_inf(&kkt_residual_with(ev, &triple)?);
    let g = ev.program().inequalities(&triple.x, &triple.xi);
    let feasible = g.iter().all(|&v| v <= opts.kkt_tol);
    if residual <= opts.kkt_tol && feasible {
        Ok(triple)
    } else {
        Err(NlpError::MaxIterations {
            iterations,
            residual,
        })
    }
}

struct IpState {
    x: Vec<f64>,
    lambda: Vec<f64>,
    s: Vec<f64>,
    mu: Vec<f64>,
}

/// Residual blocks of the barrier KKT system at barrier parameter `tau`.
fn ip_residual(ev: &Evaluator<'_>, xi: &[f64], st: &IpState, tau: f64) -> Result<Vec<f64>, NlpError> {
    let prob = ev.program();
    let mut rd = ev.grad_f(&st.x, xi)?;
    let jh = ev.jac_h(&st.x, xi)?;
    let jg = ev.jac_g(&st.x, xi)?;
    for (a, b) in rd.iter_mut().zip(jh.tr_mul_vec(&st.lambda)) {
        *a += b;
    }
    for (a, b) in rd.iter_mut().zip(jg.tr_mul_vec(&st.mu)) {
        *a += b;
    }
    let h = prob.equalities(&st.x, xi);
    let g = prob.inequalities(&st.x, xi);
    rd.extend(h);
    rd.extend(g.iter().zip(&st.s).map(|(gi, si)| gi + si));
    rd.extend(st.s.iter().zip(&st.mu).map(|(s, m)| s * m - tau));
    Ok(rd)
}

fn l2(v: &[f64]) -> f64 {
    crate::linalg::norm2(v)
}

fn interior_point(
    ev: &Evaluator<'_>,
    xi: &[f64],
    warm: Option<&KktTriple>,
    opts: &SolveOptions,
) -> Result<(KktTriple, usize), NlpError> {
    let prob = ev.program();
    let Dims { n, p, m, .. } = prob.dims();
    let x0 = warm
        .filter(|w| w.x.len() == n)
        .map_or_else(|| vec![0.0; n], |w| w.x.clone());
    let g0 = prob.inequalities(&x0, xi);
    let mut st = IpState {
        lambda: warm
            .filter(|w| w.lambda.len() == p)
            .map_or_else(|| vec![0.0; p], |w| w.lambda.clone()),
        s: g0.iter().map(|g| (-g).max(1e-2)).collect(),
        mu: warm
            .filter(|w| w.mu.len() == m)
            .map_or_else(|| vec![1.0; m], |w| w.mu.iter().map(|v| v.max(1e-2)).collect()),
        x: x0,
    };
    let tol = opts.kkt_tol * 0.1;

    for iter in 0..opts.max_iter {
        let gap = if m > 0 { dot(&st.s, &st.mu) / m as f64 } else { 0.0 };
        let r0 = ip_residual(ev, xi, &st, 0.0)?;
        if norm_inf(&r0) <= tol {
            return Ok((polish(ev, xi, st, opts)?, iter));
        }
        let tau = 0.1 * gap;
        let r = ip_residual(ev, xi, &st, tau)?;
        let (rd, rest) = r.split_at(n);
        let (rh, rest) = rest.split_at(p);
        let (rg, rc) = rest.split_at(m);

        let jh = ev.jac_h(&st.x, xi)?;
        let jg = ev.jac_g(&st.x, xi)?;
        let hl = ev.hess_lagrangian(&st.x, xi, &st.lambda, &st.mu)?;

        let mut k = hl.clone();
        for i in 0..m {
            let w = st.mu[i] / st.s[i];
            let row = jg.row(i);
            for a in 0..n {
                for b in 0..n {
                    k[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        // Convexify if needed so the step is a descent direction.
        let mut delta = 0.0;
        while Cholesky::new(&k.add_scaled_identity(delta)).is_err() {
            delta = if delta == 0.0 { 1e-10 * (1.0 + k.max_abs()) } else { delta * 10.0 };
            if delta > 1e10 {
                return Err(NlpError::Numerical("interior-point Hessian could not be regularized"));
            }
        }
        let k = k.add_scaled_identity(delta);

        let corr: Vec<f64> = (0..m).map(|i| (-rc[i] + st.mu[i] * rg[i]) / st.s[i]).collect();
        let jg_corr = jg.tr_mul_vec(&corr);
        let mut sys = Matrix::zeros(n + p, n + p);
        sys.set_block(0, 0, &k);
        sys.set_block(0, n, &jh.transpose());
        sys.set_block(n, 0, &jh);
        for i in 0..p {
            sys[(n + i, n + i)] = -1e-14;
        }
        let mut rhs: Vec<f64> = (0..n).map(|i| -rd[i] - jg_corr[i]).collect();
        rhs.extend(rh.iter().map(|v| -v));
        let sol = PivotedQr::new(&sys)?.solve_vec(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(NlpError::Numerical("interior-point Newton step is not finite"));
        }
        let (dx, dl) = sol.split_at(n);
        let jg_dx = jg.mul_vec(dx);
        let ds: Vec<f64> = (0..m).map(|i| -rg[i] - jg_dx[i]).collect();
        let dmu: Vec<f64> = (0..m)
            .map(|i| (-rc[i] - st.mu[i] * ds[i]) / st.s[i])
            .collect();

        let boundary = |v: &[f64], dv: &[f64]| {
            v.iter().zip(dv).fold(1.0_f64, |a, (vi, di)| {
                if *di < 0.0 {
                    a.min(-0.995 * vi / di)
                } else {
                    a
                }
            })
        };
        let ap = boundary(&st.s, &ds);
        let ad = boundary(&st.mu, &dmu);

        let merit0 = l2(&r);
        let mut scale = 1.0;
        let mut next;
        loop {
            let (a_p, a_d) = (ap * scale, ad * scale);
            next = IpState {
                x: st.x.iter().zip(dx).map(|(x, d)| x + a_p * d).collect(),
                s: st.s.iter().zip(&ds).map(|(x, d)| x + a_p * d).collect(),
                lambda: st.lambda.iter().zip(dl).map(|(x, d)| x + a_d * d).collect(),
                mu: st.mu.iter().zip(&dmu).map(|(x, d)| x + a_d * d).collect(),
            };
            let merit = l2(&ip_residual(ev, xi, &next, tau)?);
            if merit.is_finite() && merit <= (1.0 - 1e-4 * scale) * merit0 {
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                break;
            }
        }
        st = next;
    }
    Err(NlpError::MaxIterations {
        iterations: opts.max_iter,
        residual: norm_inf(&ip_residual(ev, xi, &st, 0.0)?),
    })
}

/// Newton iterations on `[∇L; h; g_A] = 0` with the active set guessed from
/// the interior-point iterate, clearing the barrier residue on the
/// complementarity products.
fn polish(ev: &Evaluator<'_>, xi: &[f64], st: IpState, opts: &SolveOptions) -> Result<KktTriple, NlpError> {
    let prob = ev.program();
    let Dims { n, p, m, .. } = prob.dims();
    let fallback = KktTriple {
        xi: xi.to_vec(),
        x: st.x.clone(),
        lambda: st.lambda.clone(),
        mu: st.mu.clone(),
    };
    let active: Vec<usize> = (0..m).filter(|&i| st.s[i] <= st.mu[i]).collect();
    let k = active.len();
    if p + k > n {
        return Ok(fallback);
    }

    let mut x = st.x.clone();
    let mut lambda = st.lambda.clone();
    let mut mu_a: Vec<f64> = active.iter().map(|&i| st.mu[i]).collect();
    let expand = |mu_a: &[f64]| {
        let mut mu = vec![0.0; m];
        for (&i, &v) in active.iter().zip(mu_a) {
            mu[i] = v;
        }
        mu
    };
    for _ in 0..20 {
        let mu = expand(&mu_a);
        let jh = ev.jac_h(&x, xi)?;
        let jg = ev.jac_g(&x, xi)?.select_rows(&active);
        let mut f = ev.grad_f(&x, xi)?;
        for (a, b) in f.iter_mut().zip(jh.tr_mul_vec(&lambda)) {
            *a += b;
        }
        for (a, b) in f.iter_mut().zip(jg.tr_mul_vec(&mu_a)) {
            *a += b;
        }
        f.extend(prob.equalities(&x, xi));
        let g = prob.inequalities(&x, xi);
        f.extend(active.iter().map(|&i| g[i]));
        if norm_inf(&f) <= 1e-14 {
            break;
        }
        let hl = ev.hess_lagrangian(&x, xi, &lambda, &mu)?;
        let b = jh.vstack(&jg)?;
        let mut sys = Matrix::zeros(n + p + k, n + p + k);
        sys.set_block(0, 0, &hl);
        sys.set_block(0, n, &b.transpose());
        sys.set_block(n, 0, &b);
        let step = PivotedQr::new(&sys)?.solve_vec(&f.iter().map(|v| -v).collect::<Vec<_>>());
        if step.iter().any(|v| !v.is_finite()) {
            return Ok(fallback);
        }
        for i in 0..n {
            x[i] += step[i];
        }
        for i in 0..p {
            lambda[i] += step[n + i];
        }
        for i in 0..k {
            mu_a[i] += step[n + p + i];
        }
    }

    if mu_a.iter().any(|&v| v < -1e-10) {
        return Ok(fallback);
    }
    let polished = KktTriple {
        xi: xi.to_vec(),
        x,
        lambda,
        mu: expand(&mu_a.iter().map(|v| v.max(0.0)).collect::<Vec<_>>()),
    };
    let g = prob.inequalities(&polished.x, xi);
    let res_new = norm_inf(&kkt_residual_with(ev, &polished)?);
    let res_old = norm_inf(&kkt_residual_with(ev, &fallback)?);
    if g.iter().all(|&v| v <= opts.kkt_tol) && res_new <= res_old {
        Ok(polished)
    } else {
        Ok(fallback)
    }
}

/// `min t  s.t.  h(x) = 0,  g(x) ≤ t,  t ≥ −1` over `(x, t)`.
struct PhaseOne<'a> {
    inner: &'a dyn ParametricProgram,
}

impl ParametricProgram for PhaseOne<'_> {
    fn dims(&self) -> Dims {
        let d = self.inner.dims();
        Dims {
            n: d.n + 1,
            p: d.p,
            m: d.m + 1,
            r: d.r,
        }
    }

    fn objective(&self, x: &[f64], _xi: &[f64]) -> f64 {
        x[x.len() - 1]
    }

    fn equalities(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        self.inner.equalities(&x[..x.len() - 1], xi)
    }

    fn inequalities(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let t = x[x.len() - 1];
        let mut g: Vec<f64> = self
            .inner
            .inequalities(&x[..x.len() - 1], xi)
            .into_iter()
            .map(|v| v - t)
            .collect();
        g.push(-t - 1.0);
        g
    }

    fn objective_gradient(&self, x: &[f64], _xi: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        g[x.len() - 1] = 1.0;
        Some(g)
    }

    fn objective_hessian(&self, x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(x.len(), x.len()))
    }

    fn equality_jacobian(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        let j = self.inner.equality_jacobian(&x[..x.len() - 1], xi)?;
        j.hstack(&Matrix::zeros(j.rows(), 1)).ok()
    }

    fn inequality_jacobian(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        let j = self.inner.inequality_jacobian(&x[..x.len() - 1], xi)?;
        let m = j.rows();
        let mut out = Matrix::zeros(m + 1, x.len());
        out.set_block(0, 0, &j);
        for i in 0..m {
            out[(i, x.len() - 1)] = -1.0;
        }
        out[(m, x.len() - 1)] = -1.0;
        Some(out)
    }

    fn equality_hessian(&self, i: usize, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        let h = self.inner.equality_hessian(i, &x[..x.len() - 1], xi)?;
        let mut out = Matrix::zeros(x.len(), x.len());
        out.set_block(0, 0, &h);
        Some(out)
    }

    fn inequality_hessian(&self, i: usize, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        if i == self.inner.dims().m {
            return Some(Matrix::zeros(x.len(), x.len()));
        }
        let h = self.inner.inequality_hessian(i, &x[..x.len() - 1], xi)?;
        let mut out = Matrix::zeros(x.len(), x.len());
        out.set_block(0, 0, &h);
        Some(out)
    }
}

/// Optimal value of the phase-1 problem; `−1` when the inner inequalities
/// can be satisfied with margin 1.
pub fn phase1_value(prob: &dyn ParametricProgram, xi: &[f64], opts: &SolveOptions) -> Result<f64, NlpError> {
    let d = prob.dims();
    if d.m == 0 && d.p == 0 {
        return Ok(-1.0);
    }
    let ph = PhaseOne { inner: prob };
    let ev = Evaluator::new(&ph);
    let g0 = prob.inequalities(&vec![0.0; d.n], xi);
    let t0 = g0.iter().fold(0.0_f64, |a, &b| a.max(b)) + 1.0;
    let mut x0 = vec![0.0; d.n];
    x0.push(t0);
    let warm = KktTriple {
        xi: xi.to_vec(),
        x: x0,
        lambda: vec![0.0; d.p],
        mu: vec![1.0; d.m + 1],
    };
    let relaxed = SolveOptions {
        kkt_tol: 1e-8,
        ..*opts
    };
    match interior_point(&ev, xi, Some(&warm), &relaxed) {
        Ok((sol, _)) => Ok(sol.x[d.n]),
        Err(NlpError::MaxIterations { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{kkt_residual, ClosureProgram, ParametricQp};

    #[test]
    fn unconstrained_translation() {
        let prob = ParametricQp::unconstrained(Matrix::identity(2), vec![0.0; 2], -&Matrix::identity(2));
        let sol = solve_instance(&prob, &[3.0, -1.0], None, &SolveOptions::default()).unwrap();
        assert_eq!(sol.x, vec![3.0, -1.0]);
    }

    #[test]
    fn clipped_scalar_qp() {
        let prob = ParametricQp::unconstrained(Matrix::identity(1), vec![-2.0], Matrix::zeros(1, 0))
            .with_inequalities(Matrix::identity(1), vec![1.0], Matrix::zeros(1, 0));
        let sol = solve_instance(&prob, &[], None, &SolveOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14);
        assert!((sol.mu[0] - 1.0).abs() < 1e-14);
    }

    fn disc_program() -> ClosureProgram {
        // min (x₀−2)² + (x₁−1)² + ξ x₀  s.t.  x₀² + x₁² ≤ 1
        ClosureProgram::new(2, 1, |x, xi| (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2) + xi[0] * x[0])
            .with_gradient(|x, xi| vec![2.0 * (x[0] - 2.0) + xi[0], 2.0 * (x[1] - 1.0)])
            .with_hessian(|_, _| Matrix::from_diag(&[2.0, 2.0]))
            .with_inequalities(1, |x, _| vec![x[0] * x[0] + x[1] * x[1] - 1.0])
            .with_inequality_jacobian(|x, _| Matrix::from_rows(&[[2.0 * x[0], 2.0 * x[1]]]))
            .with_inequality_hessian(|_, _, _| Matrix::from_diag(&[2.0, 2.0]))
    }

    #[test]
    fn nonlinear_constraint_via_interior_point() {
        let prob = disc_program();
        let sol = solve_instance(&prob, &[0.0], None, &SolveOptions::default()).unwrap();
        // Projection of (2, 1) onto the unit disc.
        let r = 5.0_f64.sqrt();
        assert!((sol.x[0] - 2.0 / r).abs() < 1e-9 && (sol.x[1] - 1.0 / r).abs() < 1e-9);
        // ∇f + μ∇g = 0 ⇒ 2(x−c) + 2μx = 0 ⇒ μ = √5 − 1
        assert!((sol.mu[0] - (r - 1.0)).abs() < 1e-9);
        assert!(norm_inf(&kkt_residual(&prob, &sol).unwrap()) <= 1e-9);
    }

    #[test]
    fn value_only_program_solves_with_fd() {
        let prob = ClosureProgram::new(2, 0, |x, _| (x[0] - 1.0).powi(4) + (x[0] - x[1]).powi(2) + x[1] * x[1])
            .with_inequalities(1, |x, _| vec![x[0] + x[1] - 0.5]);
        let sol = solve_instance(&prob, &[], None, &SolveOptions::default()).unwrap();
        assert!(prob.inequalities(&sol.x, &[])[0] <= 1e-9);
    }

    #[test]
    fn infeasible_nonlinear_program() {
        let prob = ClosureProgram::new(1, 0, |x, _| x[0] * x[0])
            .with_gradient(|x, _| vec![2.0 * x[0]])
            .with_hessian(|_, _| Matrix::from_diag(&[2.0]))
            .with_inequalities(2, |x, _| vec![x[0] * x[0] + 1.0, -x[0]])
            .with_inequality_jacobian(|x, _| Matrix::from_rows(&[[2.0 * x[0]], [-1.0]]))
            .with_inequality_hessian(|i, _, _| Matrix::from_diag(&[if i == 0 { 2.0 } else { 0.0 }]));
        let err = solve_instance(&prob, &[], None, &SolveOptions::default()).unwrap_err();
        match err {
            NlpError::InfeasibleProblem { phase1_value } => assert!((phase1_value - 1.0).abs() < 1e-6),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn equality_constrained_nonlinear() {
        // min x₀ + x₁ s.t. x₀² + x₁² = 2 plus a strongly convex regularizer.
        let prob = ClosureProgram::new(2, 0, |x, _| x[0] + x[1] + 0.1 * (x[0] * x[0] + x[1] * x[1]))
            .with_gradient(|x, _| vec![1.0 + 0.2 * x[0], 1.0 + 0.2 * x[1]])
            .with_hessian(|_, _| Matrix::from_diag(&[0.2, 0.2]))
            .with_equalities(1, |x, _| vec![x[0] * x[0] + x[1] * x[1] - 2.0])
            .with_equality_jacobian(|x, _| Matrix::from_rows(&[[2.0 * x[0], 2.0 * x[1]]]))
            .with_equality_hessian(|_, _, _| Matrix::from_diag(&[2.0, 2.0]));
        let warm = KktTriple {
            xi: vec![],
            x: vec![-0.5, -0.7],
            lambda: vec![0.0],
            mu: vec![],
        };
        let sol = solve_instance(&prob, &[], Some(&warm), &SolveOptions::default()).unwrap();
        assert!((sol.x[0] + 1.0).abs() < 1e-9 && (sol.x[1] + 1.0).abs() < 1e-9);
    }
}
