//! Dual active-set QP solver in the style of Goldfarb and Idnani.
//!
//! Starts from the unconstrained minimizer and adds violated constraints one
//! at a time while keeping dual feasibility, so no feasible starting point is
//! needed and an empty feasible set is detected as dual unboundedness. The
//! linear algebra is recomputed from scratch every iteration instead of
//! updated; the problems here have at most a few dozen constraints.

use super::{NlpError, QuadraticData};
use crate::linalg::{dot, Cholesky, Matrix, PivotedQr};

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Inequality rows in the final working set.
    pub working_set: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Relative feasibility tolerance on `Ux ≤ v` and `Cx = d`.
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-12,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    /// Equality row `i`, oriented by `sign` so it enters like a violated
    /// `≤` constraint.
    Eq { i: usize, sign: f64 },
    Ineq(usize),
}

struct Problem<'a> {
    qp: &'a QuadraticData,
    chol: Cholesky,
}

impl Problem<'_> {
    fn normal(&self, row: Row) -> Vec<f64> {
        match row {
            Row::Eq { i, sign } => self.qp.c.row(i).iter().map(|v| sign * v).collect(),
            Row::Ineq(i) => self.qp.u.row(i).to_vec(),
        }
    }

    fn rhs(&self, row: Row) -> f64 {
        match row {
            Row::Eq { i, sign } => sign * self.qp.d[i],
            Row::Ineq(i) => self.qp.v[i],
        }
    }

    /// Primal direction `z = H n_p` and dual direction `r = S⁻¹ N G⁻¹ n_p`
    /// for the working set `rows`, with `S = N G⁻¹ Nᵀ` and
    /// `H = G⁻¹ − G⁻¹Nᵀ S⁻¹ N G⁻¹`.
    fn directions(&self, rows: &[Row], np: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NlpError> {
        let ginv_np = self.chol.solve_vec(np);
        if rows.is_empty() {
            return Ok((ginv_np, Vec::new()));
        }
        let n = np.len();
        let mut nt = Matrix::zeros(n, rows.len());
        for (k, &row) in rows.iter().enumerate() {
            nt.set_col(k, &self.normal(row));
        }
        let w = self.chol.solve(&nt);
        let s = (&nt.transpose() * &w).symmetrized();
        let s_chol = Cholesky::new(&s).map_err(|_| NlpError::Numerical("working-set normals became dependent"))?;
        let r = s_chol.solve_vec(&w.tr_mul_vec(np));
        let wr = w.mul_vec(&r);
        let z = ginv_np.iter().zip(wr).map(|(a, b)| a - b).collect();
        Ok((z, r))
    }
}

/// Violation (relative to the problem scale) below which a row that is
/// linearly dependent on the working set is treated as satisfied.
const DEPENDENT_ROW_TOL: f64 = 1e-9;

/// Solves `min ½xᵀGx + aᵀx  s.t.  Cx = d,  Ux ≤ v` for `G ≻ 0`.
pub fn solve_qp(qp: &QuadraticData, opts: &QpOptions) -> Result<QpSolution, NlpError> {
    let p = qp.c.rows();
    let m = qp.u.rows();
    let chol = Cholesky::new(&qp.g).map_err(|_| NlpError::NotStronglyConvex)?;
    let prob = Problem { qp, chol };

    let mut x: Vec<f64> = prob.chol.solve_vec(&qp.a).iter().map(|v| -v).collect();
    let mut rows: Vec<Row> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut eq_added = vec![false; p];
    let mut redundant = vec![false; m];
    let mut iterations = 0;

    let scale = 1.0 + qp.v.iter().chain(&qp.d).fold(0.0_f64, |m, v| m.max(v.abs()));
    let row_norms: Vec<f64> = (0..m).map(|i| crate::linalg::norm2(qp.u.row(i)).max(f64::MIN_POSITIVE)).collect();

    loop {
        // Pick the next constraint: equalities first, then the most violated
        // inequality (violation measured as distance to the hyperplane).
        let candidate = if let Some(i) = (0..p).find(|&i| !eq_added[i]) {
            let res = dot(qp.c.row(i), &x) - qp.d[i];
            Some(Row::Eq {
                i,
                sign: if res < 0.0 { -1.0 } else { 1.0 },
            })
        } else {
            let xs = 1.0 + crate::linalg::norm_inf(&x);
            (0..m)
                .filter(|i| !redundant[*i] && !rows.contains(&Row::Ineq(*i)))
                .map(|i| (i, (dot(qp.u.row(i), &x) - qp.v[i]) / row_norms[i]))
                .filter(|&(_, viol)| viol > opts.feas_tol * scale.max(xs))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| Row::Ineq(i))
        };
        let Some(cand) = candidate else { break };

        let np = prob.normal(cand);
        let bp = prob.rhs(cand);
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                return Err(NlpError::MaxIterations {
                    iterations,
                    residual: f64::NAN,
                });
            }
            let (z, r) = prob.directions(&rows, &np)?;
            let ginv_np = prob.chol.solve_vec(&np);
            let nz = dot(&np, &z);
            let z_is_zero = nz <= 1e-13 * dot(&np, &ginv_np).max(f64::MIN_POSITIVE);

            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (k, &row) in rows.iter().enumerate() {
                if matches!(row, Row::Ineq(_)) && r[k] > 0.0 {
                    let t = u[k] / r[k];
                    if t < t1 {
                        t1 = t;
                        block = Some(k);
                    }
                }
            }
            let viol = dot(&np, &x) - bp;
            let t2 = if z_is_zero { f64::INFINITY } else { (viol / nz).max(0.0) };

            if t1.is_infinite() && t2.is_infinite() {
                // A row that depends on the working set and is violated only
                // at rounding level (more than n rows meeting at a vertex at
                // shallow angles) is redundant here, not a sign of an empty
                // set. Skipping it is only sound before a partial step gave
                // it a multiplier, and for equalities only when the working
                // set holds no inequality that could leave later.
                let xs = 1.0 + crate::linalg::norm_inf(&x);
                let only_eqs = rows.iter().all(|r| matches!(r, Row::Eq { .. }));
                if u_p == 0.0 && viol <= DEPENDENT_ROW_TOL * scale.max(xs) * crate::linalg::norm2(&np) {
                    match cand {
                        Row::Eq { i, .. } if only_eqs => {
                            eq_added[i] = true;
                            break;
                        }
                        Row::Ineq(i) => {
                            redundant[i] = true;
                            break;
                        }
                        Row::Eq { .. } => {}
                    }
                }
                return Err(NlpError::InfeasibleProblem {
                    phase1_value: viol.max(0.0),
                });
            }
            let t = t1.min(t2);
            if !z_is_zero {
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi -= t * zi;
                }
            }
            for (uk, rk) in u.iter_mut().zip(&r) {
                *uk -= t * rk;
            }
            u_p += t;

            if t2 <= t1 {
                rows.push(cand);
                u.push(u_p);
                // The working set changed, so earlier redundancy verdicts
                // no longer apply.
                redundant.fill(false);
                if let Row::Eq { i, .. } = cand {
                    eq_added[i] = true;
                }
                break;
            }
            let k = block.expect("finite dual step has a blocking row");
            rows.remove(k);
            u.remove(k);
        }
    }

    polish(&prob, &rows, &mut x, &mut u);

    let mut lambda = vec![0.0; p];
    let mut mu = vec![0.0; m];
    let mut working_set = Vec::new();
    for (&row, &uk) in rows.iter().zip(&u) {
        match row {
            Row::Eq { i, sign } => lambda[i] = sign * uk,
            Row::Ineq(i) => {
                mu[i] = uk.max(0.0);
                working_set.push(i);
            }
        }
    }
    working_set.sort_unstable();
    Ok(QpSolution {
        x,
        lambda,
        mu,
        working_set,
        iterations,
    })
}

/// Re-solves the equality-constrained KKT system of the final working set
/// directly, removing the drift accumulated over the dual steps. Keeps the
/// polished point only if it is at least as feasible and dual feasible.
fn polish(prob: &Problem<'_>, rows: &[Row], x: &mut [f64], u: &mut [f64]) {
    let qp = prob.qp;
    let n = x.len();
    let k = rows.len();
    let mut kkt = Matrix::zeros(n + k, n + k);
    kkt.set_block(0, 0, &qp.g);
    let mut rhs = vec![0.0; n + k];
    for (i, a) in qp.a.iter().enumerate() {
        rhs[i] = -a;
    }
    for (j, &row) in rows.iter().enumerate() {
        let nr = prob.normal(row);
        for (i, v) in nr.iter().enumerate() {
            kkt[(i, n + j)] = *v;
            kkt[(n + j, i)] = *v;
        }
        rhs[n + j] = prob.rhs(row);
    }
    let Ok(qr) = PivotedQr::new(&kkt) else { return };
    let sol = qr.solve_vec(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return;
    }
    let (xn, un) = sol.split_at(n);

    let max_viol = |y: &[f64]| {
        (0..qp.u.rows())
            .map(|i| dot(qp.u.row(i), y) - qp.v[i])
            .fold(0.0_f64, f64::max)
    };
    let dual_ok = rows
        .iter()
        .zip(un)
        .all(|(row, &uk)| matches!(row, Row::Eq { .. }) || uk >= -1e-10);
    if dual_ok && max_viol(xn) <= max_viol(x).max(1e-12) {
        x.copy_from_slice(xn);
        u.copy_from_slice(un);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(g: Matrix, a: Vec<f64>, u: Matrix, v: Vec<f64>) -> QuadraticData {
        let n = g.rows();
        QuadraticData {
            g,
            a,
            c: Matrix::zeros(0, n),
            d: vec![],
            u,
            v,
        }
    }

    #[test]
    fn clipped_scalar() {
        // ½(x−2)² s.t. x ≤ 1
        let sol = solve_qp(
            &qp(Matrix::identity(1), vec![-2.0], Matrix::identity(1), vec![1.0]),
            &QpOptions::default(),
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-15);
        assert!((sol.mu[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn box_corner_projection() {
        let u = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let sol = solve_qp(
            &qp(Matrix::identity(2), vec![-2.0, -2.0], u, vec![1.0, 1.0]),
            &QpOptions::default(),
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14 && (sol.x[1] - 1.0).abs() < 1e-14);
        assert_eq!(sol.working_set, vec![0, 1]);
    }

    #[test]
    fn redundant_constraints_through_one_point() {
        // Three lines through (1, 1); projection of (3, 3) is the vertex.
        let u = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let sol = solve_qp(
            &qp(Matrix::identity(2), vec![-3.0, -3.0], u, vec![1.0, 1.0, 2.0]),
            &QpOptions::default(),
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        // Stationarity holds whatever split of multipliers was chosen.
        let grad = [sol.x[0] - 3.0, sol.x[1] - 3.0];
        let ut_mu = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).tr_mul_vec(&sol.mu);
        assert!((grad[0] + ut_mu[0]).abs() < 1e-12 && (grad[1] + ut_mu[1]).abs() < 1e-12);
    }

    #[test]
    fn overdetermined_vertex_at_shallow_angles() {
        // Three rows through the origin in the plane, two of them nearly
        // antiparallel. The third is dependent once the vertex is reached and
        // violated only by rounding.
        let u = Matrix::from_rows(&[
            [0.22642408313821516, -0.3539172080254824],
            [-0.3761913083418616, 0.0],
            [-0.18352727915955763, 0.29163125606983203],
        ]);
        let g = Matrix::from_rows(&[[0.08456378, 0.17553359], [0.17553359, 0.86438224]]).add_scaled_identity(0.5);
        let sol = solve_qp(&qp(g, vec![0.0, -1.6100045439982518], u, vec![0.0; 3]), &QpOptions::default()).unwrap();
        assert!(sol.x.iter().all(|v| v.abs() < 1e-8), "{:?}", sol.x);
    }

    #[test]
    fn equality_and_inequality() {
        // min ½‖x‖² s.t. x₀ + x₁ = 2, x₀ ≤ 0.5 → x = (0.5, 1.5)
        let data = QuadraticData {
            g: Matrix::identity(2),
            a: vec![0.0, 0.0],
            c: Matrix::from_rows(&[[1.0, 1.0]]),
            d: vec![2.0],
            u: Matrix::from_rows(&[[1.0, 0.0]]),
            v: vec![0.5],
        };
        let sol = solve_qp(&data, &QpOptions::default()).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-14 && (sol.x[1] - 1.5).abs() < 1e-14);
        assert!((sol.lambda[0] + 1.5).abs() < 1e-14);
        assert!((sol.mu[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_feasible_set_is_detected() {
        // x ≤ −1 and −x ≤ −1
        let u = Matrix::from_rows(&[[1.0], [-1.0]]);
        let err = solve_qp(
            &qp(Matrix::identity(1), vec![0.0], u, vec![-1.0, -1.0]),
            &QpOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, NlpError::InfeasibleProblem { .. }));
    }

    #[test]
    fn indefinite_hessian_is_rejected() {
        let err = solve_qp(
            &qp(Matrix::from_diag(&[1.0, -1.0]), vec![0.0; 2], Matrix::zeros(0, 2), vec![]),
            &QpOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, NlpError::NotStronglyConvex));
    }
}
