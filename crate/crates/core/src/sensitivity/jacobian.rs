use rayon::prelude::*;

use super::{SensitivityBlocks, SensitivityError};
use crate::linalg::{norm2, Matrix};
use crate::nlp::{solve_instance, KktTriple, ParametricProgram, SolveOptions};

/// Derivatives of the solution map with respect to the parameter.
#[derive(Debug, Clone)]
pub struct SolutionJacobians {
    /// `∇_ξ x*`, n × r.
    pub dx_dxi: Matrix,
    /// `∇_ξ (λ*, μ*_R)`, (p + |R|) × r, rows ordered as in the blocks.
    pub dlm_dxi: Matrix,
    /// `∇_ξ μ*` for the rows outside `R`; identically zero.
    pub dmu_inactive: Matrix,
    /// `∇_ξ (λ*, μ*)` over all `p + m` multipliers, zero rows outside `R`.
    pub multiplier_full: Matrix,
}

/// Differentiates the KKT system
/// `∇_x L = 0`, `[h; g_R] = 0` with respect to `ξ`:
///
/// ```text
/// ∇_ξ x*      = −Π A⁻¹ L* − Σ B† G*
/// ∇_ξ (λ, μ_R) = −B†ᵀ A Σ (A⁻¹ L* − B† G*)
/// ```
///
/// The multiplier line equals `(BA⁻¹Bᵀ)⁻¹(G* − BA⁻¹L*)`, the direct solve of
/// the linearized system.
pub fn solution_jacobian(blocks: &SensitivityBlocks) -> Result<SolutionJacobians, SensitivityError> {
    let n = blocks.n();
    let r = blocks.r();
    let a_inv_l = &blocks.a_inv * &blocks.l_star;
    let k = blocks.b.rows();

    let (dx_dxi, dlm_dxi) = if k == 0 {
        (-&a_inv_l, Matrix::zeros(0, r))
    } else {
        let bd_g = &blocks.b_dagger * &blocks.g_star;
        let dx = &(-&(&blocks.pi * &a_inv_l)) - &(&blocks.sigma * &bd_g);
        let left = &(&blocks.b_dagger.transpose() * &blocks.a) * &blocks.sigma;
        let dlm = -&(&left * &(&a_inv_l - &bd_g));
        (dx, dlm)
    };
    debug_assert_eq!(dx_dxi.shape(), (n, r));

    let m = blocks.m;
    let p = blocks.p;
    let inactive = m - blocks.active_set_used.len();
    let mut full = Matrix::zeros(p + m, r);
    for i in 0..p {
        for j in 0..r {
            full[(i, j)] = dlm_dxi[(i, j)];
        }
    }
    for (k, &row) in blocks.active_set_used.iter().enumerate() {
        for j in 0..r {
            full[(p + row, j)] = dlm_dxi[(p + k, j)];
        }
    }
    Ok(SolutionJacobians {
        dx_dxi,
        dlm_dxi,
        dmu_inactive: Matrix::zeros(inactive, r),
        multiplier_full: full,
    })
}

/// Central-difference derivatives of the solution map.
#[derive(Debug, Clone)]
pub struct FdJacobians {
    /// n × r
    pub dx: Matrix,
    /// (p + m) × r
    pub dmult: Matrix,
    pub step: f64,
}

/// Default FD step `1e-4 · (1 + ‖ξ‖)`.
pub fn default_fd_step(xi: &[f64]) -> f64 {
    1e-4 * (1.0 + norm2(xi))
}

/// One column of `(dx, dmult)` differences.
type FdColumn = (Vec<f64>, Vec<f64>);

/// Re-solves the program at `ξ ± step·e_j` (warm started from `base` when
/// given) and differences the solutions.
pub fn fd_jacobian_oracle(
    prob: &dyn ParametricProgram,
    xi: &[f64],
    step: f64,
    base: Option<&KktTriple>,
    opts: &SolveOptions,
) -> Result<FdJacobians, SensitivityError> {
    let dims = prob.dims();
    let columns: Vec<Result<FdColumn, SensitivityError>> = (0..dims.r)
        .into_par_iter()
        .map(|j| {
            let mut plus = xi.to_vec();
            plus[j] += step;
            let mut minus = xi.to_vec();
            minus[j] -= step;
            let sp = solve_instance(prob, &plus, base, opts)?;
            let sm = solve_instance(prob, &minus, base, opts)?;
            let dx = sp.x.iter().zip(&sm.x).map(|(a, b)| (a - b) / (2.0 * step)).collect();
            let dm = sp
                .multipliers()
                .iter()
                .zip(sm.multipliers())
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect();
            Ok((dx, dm))
        })
        .collect();
    let mut dx = Matrix::zeros(dims.n, dims.r);
    let mut dmult = Matrix::zeros(dims.p + dims.m, dims.r);
    for (j, col) in columns.into_iter().enumerate() {
        let (cx, cm) = col?;
        dx.set_col(j, &cx);
        dmult.set_col(j, &cm);
    }
    Ok(FdJacobians { dx, dmult, step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nlp::{KktTolerances, ParametricQp};
    use crate::sensitivity::assemble_blocks;

    fn solve(prob: &ParametricQp, xi: &[f64]) -> KktTriple {
        solve_instance(prob, xi, None, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn unconstrained_translation_has_identity_jacobian() {
        // ½‖x − ξ‖² = ½xᵀx − ξᵀx
        let prob = ParametricQp::unconstrained(Matrix::identity(2), vec![0.0; 2], -&Matrix::identity(2));
        let pt = solve(&prob, &[0.3, -0.2]);
        let blocks = assemble_blocks(&prob, &pt, &[], &KktTolerances::default()).unwrap();
        assert_eq!(blocks.a, Matrix::identity(2));
        assert_eq!(blocks.l_star, -&Matrix::identity(2));
        assert_eq!(blocks.b.rows(), 0);
        let jac = solution_jacobian(&blocks).unwrap();
        assert!((&jac.dx_dxi - &Matrix::identity(2)).max_abs() < 1e-15);
    }

    /// ½(x − ξ)² s.t. x ≤ 0 at ξ > 0: x* = 0, μ* = ξ, so dμ/dξ = +1.
    #[test]
    fn multiplier_derivative_sign() {
        let prob = ParametricQp::unconstrained(Matrix::identity(1), vec![0.0], Matrix::from_rows(&[[-1.0]]))
            .with_inequalities(Matrix::identity(1), vec![0.0], Matrix::zeros(1, 1));
        let pt = solve(&prob, &[0.7]);
        assert!((pt.mu[0] - 0.7).abs() < 1e-14);
        let blocks = assemble_blocks(&prob, &pt, &[0], &KktTolerances::default()).unwrap();
        let jac = solution_jacobian(&blocks).unwrap();
        assert!(jac.dx_dxi[(0, 0)].abs() < 1e-15);
        assert!((jac.dlm_dxi[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn multiplier_formula_matches_direct_solve() {
        let g = Matrix::from_rows(&[[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.5]]);
        let e = Matrix::from_rows(&[[1.0, 0.0], [0.5, -1.0], [0.0, 2.0]]);
        let u = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 1.0, -1.0]]);
        let prob = ParametricQp::unconstrained(g, vec![-4.0, -3.0, 1.0], e)
            .with_inequalities(u, vec![0.0, 0.0], Matrix::from_rows(&[[0.3, 0.0], [0.0, -0.2]]));
        let pt = solve(&prob, &[0.0, 0.0]);
        let tol = KktTolerances::default();
        let class = crate::nlp::classify_active_set(&prob, &pt, tol.eps_act, tol.eps_strong).unwrap();
        let blocks = assemble_blocks(&prob, &pt, &class.active, &tol).unwrap();
        let jac = solution_jacobian(&blocks).unwrap();

        // (BA⁻¹Bᵀ)⁻¹(G* − BA⁻¹L*)
        let b = &blocks.b;
        let s = &(b * &blocks.a_inv) * &b.transpose();
        let s_inv = crate::linalg::inverse_with_condition(&s).unwrap().0;
        let rhs = &blocks.g_star - &(&(b * &blocks.a_inv) * &blocks.l_star);
        let direct = &s_inv * &rhs;
        assert!((&direct - &jac.dlm_dxi).max_abs() < 1e-12);
        // And the solution derivative keeps the active rows satisfied.
        let moved = &(b * &jac.dx_dxi) + &blocks.g_star;
        assert!(moved.max_abs() < 1e-12);
    }
}
