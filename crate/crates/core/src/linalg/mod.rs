//! Small dense linear algebra: factorizations, block inversion, the right
//! pseudoinverse, spectral extremes and the oblique projectors used by the
//! sensitivity formulas.

mod decomp;
mod matrix;
mod ops;

pub use decomp::{
    identity_residual, inverse_with_condition, norm1, null_space, singular_values,
    symmetric_eigen, Cholesky, PivotedQr,
};
pub use matrix::Matrix;
pub use ops::{
    assemble_partitioned, block_inverse, oblique_projectors, right_pseudoinverse, spectral_extremes, BlockInverse,
    SpectralExtremes,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("leading block A is singular or exceeds the condition cap (estimate {cond:e})")]
    SingularA { cond: f64 },
    #[error("Schur complement D - B A^-1 C is singular (condition estimate {cond:e})")]
    SingularSchurComplement { cond: f64 },
    #[error("matrix is singular (condition estimate {cond:e})")]
    Singular { cond: f64 },
    #[error("rank deficient: smallest singular value {sigma_min:e} is below tolerance {tol:e}")]
    RankDeficient { sigma_min: f64, tol: f64 },
    #[error("{op}: dimension mismatch, expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
}

/// Tolerances shared by the rank and conditioning checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinalgOptions {
    /// Relative rank tolerance: singular values below `rank_tol · σ_max` count
    /// as zero.
    pub rank_tol: f64,
    /// Condition number beyond which a matrix is treated as singular.
    pub cond_cap: f64,
}

impl Default for LinalgOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-9,
            cond_cap: 1e12,
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dot product accumulated in roughly twice the working precision
/// (error-free transformations for the products and the running sum).
pub fn dot_compensated(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0_f64;
    let mut c = 0.0_f64;
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(*y, -p);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        c += pe + se;
    }
    s + c
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| alpha * xi + yi).collect()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
