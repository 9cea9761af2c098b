use super::decomp::{identity_residual, inverse_with_condition, singular_values, symmetric_eigen};
use super::{Cholesky, LinalgError, LinalgOptions, Matrix, PivotedQr};

/// The four blocks of `[[A, C], [B, D]]⁻¹`.
#[derive(Debug, Clone)]
pub struct BlockInverse {
    pub m1: Matrix,
    pub m2: Matrix,
    pub m3: Matrix,
    pub m4: Matrix,
}

impl BlockInverse {
    /// The full `(n+m) × (n+m)` inverse.
    pub fn assemble(&self) -> Matrix {
        let n = self.m1.rows();
        let m = self.m4.rows();
        let mut out = Matrix::zeros(n + m, n + m);
        out.set_block(0, 0, &self.m1);
        out.set_block(0, n, &self.m2);
        out.set_block(n, 0, &self.m3);
        out.set_block(n, n, &self.m4);
        out
    }
}

/// Assembles `[[A, C], [B, D]]` with `A` n×n, `B` m×n, `C` n×m, `D` m×m.
pub fn assemble_partitioned(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Matrix,
) -> Result<Matrix, LinalgError> {
    let n = a.rows();
    let m = d.rows();
    let checks: [(&'static str, &Matrix, (usize, usize)); 4] = [
        ("block_inverse: A", a, (n, n)),
        ("block_inverse: B", b, (m, n)),
        ("block_inverse: C", c, (n, m)),
        ("block_inverse: D", d, (m, m)),
    ];
    for (op, mat, expected) in checks {
        if mat.shape() != expected {
            return Err(LinalgError::DimensionMismatch {
                op,
                expected,
                found: mat.shape(),
            });
        }
        if !mat.is_finite() {
            return Err(LinalgError::NonFinite);
        }
    }
    let mut full = Matrix::zeros(n + m, n + m);
    full.set_block(0, 0, a);
    full.set_block(0, n, c);
    full.set_block(n, 0, b);
    full.set_block(n, n, d);
    Ok(full)
}

/// Inverts `M = [[A, C], [B, D]]` through the Schur complement
/// `S = D − B A⁻¹ C`:
///
/// ```text
/// M1 = A⁻¹ + A⁻¹ C S⁻¹ B A⁻¹    M2 = −A⁻¹ C S⁻¹
/// M3 = −S⁻¹ B A⁻¹               M4 = S⁻¹
/// ```
///
/// The assembled result gets one refinement step against `M` with a
/// compensated residual, which recovers the accuracy the Schur route loses
/// when `A` is worse conditioned than `M`.
pub fn block_inverse(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Matrix,
    opts: &LinalgOptions,
) -> Result<BlockInverse, LinalgError> {
    let full = assemble_partitioned(a, b, c, d)?;
    let n = a.rows();
    let m = d.rows();

    let a_inv = match inverse_with_condition(a) {
        Ok((inv, cond)) if cond <= opts.cond_cap => inv,
        Ok((_, cond)) | Err(LinalgError::Singular { cond }) => {
            return Err(LinalgError::SingularA { cond })
        }
        Err(e) => return Err(e),
    };
    let a_inv_c = &a_inv * c;
    let b_a_inv = b * &a_inv;
    let schur = d - &(b * &a_inv_c);
    let s_inv = match inverse_with_condition(&schur) {
        Ok((inv, cond)) if cond <= opts.cond_cap => inv,
        Ok((_, cond)) | Err(LinalgError::Singular { cond }) => {
            return Err(LinalgError::SingularSchurComplement { cond })
        }
        Err(e) => return Err(e),
    };

    let m2 = -&(&a_inv_c * &s_inv);
    let m3 = -&(&s_inv * &b_a_inv);
    let m1 = &a_inv - &(&m2 * &b_a_inv);
    let blocks = BlockInverse {
        m1,
        m2,
        m3,
        m4: s_inv,
    };

    let mut x = blocks.assemble();
    let resid = identity_residual(&full, &x);
    let correction = &x * &resid;
    x.add_assign_scaled(&correction, 1.0);
    if !x.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    Ok(BlockInverse {
        m1: x.submatrix(0, 0, n, n),
        m2: x.submatrix(0, n, n, m),
        m3: x.submatrix(n, 0, m, n),
        m4: x.submatrix(n, n, m, m),
    })
}

/// `B† = Bᵀ(BBᵀ)⁻¹` for `B` with full row rank, evaluated through a pivoted
/// QR of `Bᵀ` rather than the normal equations.
pub fn right_pseudoinverse(b: &Matrix, opts: &LinalgOptions) -> Result<Matrix, LinalgError> {
    let (k, n) = b.shape();
    if k == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    if !b.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if k > n {
        return Err(LinalgError::RankDeficient {
            sigma_min: 0.0,
            tol: 0.0,
        });
    }
    let sv = singular_values(b);
    let sigma_min = sv[k - 1];
    let tol = opts.rank_tol * sv[0];
    if !(sigma_min > tol) {
        return Err(LinalgError::RankDeficient { sigma_min, tol });
    }

    // Bᵀ P = Q₁ R  ⇒  B = P Rᵀ Q₁ᵀ  ⇒  B† = Q₁ R⁻ᵀ Pᵀ.
    let qr = PivotedQr::new(&b.transpose())?;
    let r = qr.r();
    let q = qr.q();
    let perm = qr.permutation();
    let mut out = Matrix::zeros(n, k);
    for (col, &p) in perm.iter().enumerate() {
        // Column p of B† is Q₁ R⁻ᵀ e_col; solve Rᵀ y = e_col by forward
        // substitution.
        let mut y = vec![0.0; k];
        for i in 0..k {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for l in 0..i {
                s -= r[(l, i)] * y[l];
            }
            y[i] = s / r[(i, i)];
        }
        for row in 0..n {
            out[(row, p)] = (0..k).map(|l| q[(row, l)] * y[l]).sum();
        }
    }
    Ok(out)
}

/// Extreme eigenvalues of a symmetric matrix or extreme singular values of
/// anything else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralExtremes {
    Symmetric { lambda_min: f64, lambda_max: f64 },
    General { sigma_min: f64, sigma_max: f64 },
}

impl SpectralExtremes {
    /// Ratio `max / min` of whichever pair is present.
    pub fn condition(&self) -> f64 {
        match *self {
            Self::Symmetric {
                lambda_min,
                lambda_max,
            } => lambda_max.abs() / lambda_min.abs(),
            Self::General {
                sigma_min,
                sigma_max,
            } => sigma_max / sigma_min,
        }
    }
}

/// Symmetric inputs (to a relative tolerance of 1e-13) get Jacobi
/// eigenvalues; everything else gets singular values. For a `k × n` input the
/// singular extremes are taken over the `min(k, n)` singular values.
pub fn spectral_extremes(m: &Matrix) -> Result<SpectralExtremes, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if m.is_empty() {
        return Ok(SpectralExtremes::General {
            sigma_min: 0.0,
            sigma_max: 0.0,
        });
    }
    if m.is_symmetric(1e-13) {
        let (vals, _) = symmetric_eigen(m);
        return Ok(SpectralExtremes::Symmetric {
            lambda_min: vals[0],
            lambda_max: vals[vals.len() - 1],
        });
    }
    let sv = singular_values(m);
    Ok(SpectralExtremes::General {
        sigma_min: sv[sv.len() - 1],
        sigma_max: sv[0],
    })
}

/// `Σ = A⁻¹Bᵀ(BA⁻¹Bᵀ)⁻¹B` and `Π = I − Σ` for `A ≻ 0` and `B` with full row
/// rank. An empty `B` gives `Σ = 0`, `Π = I`.
pub fn oblique_projectors(
    a: &Matrix,
    b: &Matrix,
    opts: &LinalgOptions,
) -> Result<(Matrix, Matrix), LinalgError> {
    let n = a.rows();
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            op: "oblique_projectors: A",
            expected: (n, n),
            found: a.shape(),
        });
    }
    if b.rows() > 0 && b.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "oblique_projectors: B",
            expected: (b.rows(), n),
            found: b.shape(),
        });
    }
    let (vals, _) = symmetric_eigen(a);
    let lmin = vals.first().copied().unwrap_or(1.0);
    let lmax = vals.last().copied().unwrap_or(1.0);
    if !(lmin > 0.0) || lmax / lmin > opts.cond_cap {
        return Err(LinalgError::SingularA { cond: lmax / lmin });
    }
    if b.rows() == 0 {
        return Ok((Matrix::zeros(n, n), Matrix::identity(n)));
    }
    let sv = singular_values(b);
    let sigma_min = sv[sv.len() - 1];
    let tol = opts.rank_tol * sv[0];
    if b.rows() > n || !(sigma_min > tol) {
        return Err(LinalgError::RankDeficient { sigma_min, tol });
    }

    // With A = LLᵀ, Σ = L⁻ᵀ P Lᵀ where P is the orthogonal projector onto
    // range(L⁻¹Bᵀ). Building P from an orthonormal basis keeps the error at
    // κ(A)·ε instead of going through (BA⁻¹Bᵀ)⁻¹.
    let chol = Cholesky::new(a).map_err(|_| LinalgError::SingularA { cond: lmax / lmin })?;
    let k = b.rows();
    let m = chol.solve_lower(&b.transpose());
    let qr = PivotedQr::new(&m)?;
    if qr.rank(opts.rank_tol) < k {
        return Err(LinalgError::RankDeficient { sigma_min, tol });
    }
    let q1 = qr.q().submatrix(0, 0, n, k);
    let y = chol.solve_upper(&q1);
    let z = chol.factor() * &q1;
    let sigma = &y * &z.transpose();
    let pi = &Matrix::identity(n) - &sigma;
    Ok((sigma, pi))
}
