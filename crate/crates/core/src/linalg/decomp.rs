//! Dense factorizations for small systems.
//!
//! Everything here is O(n³) and written for n in the tens; none of it tries
//! to be cache-friendly.

use super::{dot, LinalgError, Matrix};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch {
                op: "cholesky",
                expected: (a.rows(), a.rows()),
                found: a.shape(),
            });
        }
        if !a.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(b.len(), n, "cholesky solve dimension mismatch");
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let mut x = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            x.set_col(j, &self.solve_vec(&b.col(j)));
        }
        x
    }

    pub fn inverse(&self) -> Matrix {
        self.solve(&Matrix::identity(self.l.rows())).symmetrized()
    }

    /// `L⁻¹ B` by forward substitution.
    pub fn solve_lower(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows();
        assert_eq!(b.rows(), n, "cholesky solve dimension mismatch");
        let mut x = b.clone();
        for j in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / self.l[(i, i)];
            }
        }
        x
    }

    /// `L⁻ᵀ B` by back substitution.
    pub fn solve_upper(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows();
        assert_eq!(b.rows(), n, "cholesky solve dimension mismatch");
        let mut x = b.clone();
        for j in 0..b.cols() {
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, j)];
                }
                x[(i, j)] = s / self.l[(i, i)];
            }
        }
        x
    }
}

/// Householder QR with column pivoting: `A P = Q R`.
///
/// `Q` is stored in full (`m × m`) because the null-space routine needs the
/// trailing columns.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    q: Matrix,
    r: Matrix,
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn new(a: &Matrix) -> Result<Self, LinalgError> {
        if !a.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let (m, n) = a.shape();
        let mut r = a.clone();
        let mut q = Matrix::identity(m);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<f64> = (0..n)
            .map(|j| (0..m).map(|i| r[(i, j)] * r[(i, j)]).sum())
            .collect();

        for k in 0..m.min(n) {
            // Pivot on the largest remaining column norm. Norms are recomputed
            // rather than downdated; at these sizes the cost is irrelevant and
            // it avoids the usual cancellation trap.
            for (j, nj) in norms.iter_mut().enumerate().skip(k) {
                *nj = (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
            }
            let p = (k..n)
                .max_by(|&x, &y| norms[x].total_cmp(&norms[y]).then(y.cmp(&x)))
                .unwrap_or(k);
            if p != k {
                for i in 0..m {
                    let tmp = r[(i, k)];
                    r[(i, k)] = r[(i, p)];
                    r[(i, p)] = tmp;
                }
                perm.swap(k, p);
                norms.swap(k, p);
            }

            let alpha = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
            if alpha == 0.0 {
                continue;
            }
            let beta = if r[(k, k)] > 0.0 { -alpha } else { alpha };
            let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
            v[0] -= beta;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            let tau = 2.0 / vnorm2;

            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * tau;
                for i in k..m {
                    r[(i, j)] -= s * v[i - k];
                }
            }
            for i in 0..m {
                let s: f64 = (k..m).map(|l| q[(i, l)] * v[l - k]).sum::<f64>() * tau;
                for l in k..m {
                    q[(i, l)] -= s * v[l - k];
                }
            }
            r[(k, k)] = beta;
            for i in (k + 1)..m {
                r[(i, k)] = 0.0;
            }
        }
        Ok(Self { q, r, perm })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Numerical rank: number of `|R_kk|` above `rel_tol · |R_00|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let k = self.r.rows().min(self.r.cols());
        if k == 0 {
            return 0;
        }
        let r00 = self.r[(0, 0)].abs();
        if r00 == 0.0 {
            return 0;
        }
        (0..k)
            .take_while(|&i| self.r[(i, i)].abs() > rel_tol * r00)
            .count()
    }

    /// Solves `A x = b` for square nonsingular `A`.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.r.cols();
        let qtb = self.q.tr_mul_vec(b);
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = qtb[i];
            for k in (i + 1)..n {
                s -= self.r[(i, k)] * y[k];
            }
            y[i] = s / self.r[(i, i)];
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    pub fn solve(&self, b: &Matrix) -> Matrix {
        let mut x = Matrix::zeros(self.r.cols(), b.cols());
        for j in 0..b.cols() {
            x.set_col(j, &self.solve_vec(&b.col(j)));
        }
        x
    }
}

/// Inverse of a square matrix via pivoted QR plus one step of iterative
/// refinement with a compensated residual. Returns the inverse together with
/// the 1-norm condition estimate `‖A‖₁‖A⁻¹‖₁`.
pub fn inverse_with_condition(a: &Matrix) -> Result<(Matrix, f64), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            op: "inverse",
            expected: (a.rows(), a.rows()),
            found: a.shape(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok((Matrix::zeros(0, 0), 1.0));
    }
    let qr = PivotedQr::new(a)?;
    let r00 = qr.r[(0, 0)].abs();
    let rmin = (0..n).map(|i| qr.r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if r00 == 0.0 || rmin <= f64::EPSILON * r00 {
        return Err(LinalgError::Singular {
            cond: f64::INFINITY,
        });
    }
    let mut x = qr.solve(&Matrix::identity(n));
    let resid = identity_residual(a, &x);
    let correction = qr.solve(&resid);
    x.add_assign_scaled(&correction, 1.0);
    if !x.is_finite() {
        return Err(LinalgError::Singular {
            cond: f64::INFINITY,
        });
    }
    let cond = norm1(a) * norm1(&x);
    Ok((x, cond))
}

/// `I − A X` with each entry accumulated by a compensated dot product.
pub fn identity_residual(a: &Matrix, x: &Matrix) -> Matrix {
    let n = a.rows();
    let mut r = Matrix::zeros(n, x.cols());
    let xt = x.transpose();
    for i in 0..n {
        for j in 0..x.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            r[(i, j)] = target - super::dot_compensated(a.row(i), xt.row(j));
        }
    }
    r
}

/// Maximum absolute column sum.
pub fn norm1(a: &Matrix) -> f64 {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Symmetric eigendecomposition by the cyclic Jacobi method.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_col(dst, &v.col(src));
    }
    (values, vectors)
}

/// Singular values in descending order (`min(rows, cols)` of them), by
/// one-sided Jacobi on the taller orientation.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut w = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (m, n) = w.shape();
    if n == 0 {
        return Vec::new();
    }
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    alpha += w[(i, p)] * w[(i, p)];
                    beta += w[(i, q)] * w[(i, q)];
                    gamma += w[(i, p)] * w[(i, q)];
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Orthonormal basis (as columns) of the null space of `b` (`k × n`).
///
/// Uses pivoted QR of `bᵀ`; the trailing `n − rank` columns of `Q` span
/// `ker b`. An empty `b` yields the identity.
pub fn null_space(b: &Matrix, n: usize, rel_tol: f64) -> Result<Matrix, LinalgError> {
    if b.rows() == 0 {
        return Ok(Matrix::identity(n));
    }
    if b.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "null_space",
            expected: (b.rows(), n),
            found: b.shape(),
        });
    }
    let qr = PivotedQr::new(&b.transpose())?;
    let rank = qr.rank(rel_tol);
    Ok(qr.q().submatrix(0, rank, n, n - rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let ch = Cholesky::new(&a).unwrap();
        let x = ch.solve_vec(&[2.0, 1.0]);
        let ax = a.mul_vec(&x);
        assert!(close(ax[0], 2.0, 1e-14) && close(ax[1], 1.0, 1e-14));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            Cholesky::new(&a),
            Err(LinalgError::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn qr_reconstructs_input() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 4.0, 1.0], [2.0, 2.0, 2.0]]);
        let qr = PivotedQr::new(&a).unwrap();
        let qrm = qr.q() * qr.r();
        for (k, &p) in qr.permutation().iter().enumerate() {
            for i in 0..4 {
                assert!((qrm[(i, k)] - a[(i, p)]).abs() < 1e-13);
            }
        }
        let qtq = &qr.q().transpose() * qr.q();
        assert!((&qtq - &Matrix::identity(4)).max_abs() < 1e-14);
    }

    #[test]
    fn eigen_of_example_quadratic() {
        let q = Matrix::from_rows(&[[12.0, -8.0], [-8.0, 10.0]]);
        let (vals, vecs) = symmetric_eigen(&q);
        let disc = 260.0_f64.sqrt();
        assert!(close(vals[0], (22.0 - disc) / 2.0, 1e-14));
        assert!(close(vals[1], (22.0 + disc) / 2.0, 1e-14));
        let qv = &q * &vecs;
        for j in 0..2 {
            for i in 0..2 {
                assert!((qv[(i, j)] - vals[j] * vecs[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_values_of_column_and_wide_matrix() {
        let v1 = Matrix::column(&[-0.05, -0.3, 0.25, -0.5]);
        let s = singular_values(&v1);
        assert_eq!(s.len(), 1);
        assert!(close(s[0], 0.405_f64.sqrt(), 1e-14));

        let b = Matrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, 0.0, -2.0]]);
        assert_eq!(singular_values(&b), vec![3.0, 2.0]);
    }

    #[test]
    fn null_space_is_orthogonal_complement() {
        let b = Matrix::from_rows(&[[1.0, 1.0, 0.0]]);
        let z = null_space(&b, 3, 1e-12).unwrap();
        assert_eq!(z.shape(), (3, 2));
        assert!((&b * &z).max_abs() < 1e-14);
        assert!((&(&z.transpose() * &z) - &Matrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn inverse_of_small_matrix() {
        let a = Matrix::from_rows(&[[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]);
        let (inv, cond) = inverse_with_condition(&a).unwrap();
        assert!(identity_residual(&a, &inv).max_abs() < 1e-15);
        assert!(cond > 1.0 && cond < 10.0);
    }

    #[test]
    fn inverse_detects_singularity() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(
            inverse_with_condition(&a),
            Err(LinalgError::Singular { .. })
        ));
    }
}
