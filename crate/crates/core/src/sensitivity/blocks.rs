use super::SensitivityError;
use crate::linalg::{
    oblique_projectors, right_pseudoinverse, singular_values, symmetric_eigen, Cholesky,
    LinalgError, Matrix,
};
use crate::nlp::{classify_active_set, Evaluator, KktTolerances, KktTriple, ParametricProgram};

/// Smallest eigenvalue of `∇²_xx L` accepted as positive definite.
pub const HESSIAN_FLOOR: f64 = 1e-10;

/// The matrices the sensitivity formulas are built from, evaluated at one
/// KKT point for one choice `R` of inequality rows:
///
/// * `a = ∇²_xx L` (n × n)
/// * `b = [∇_x h; ∇_x g_R]` (k × n, k = p + |R|)
/// * `l_star = ∇²_{ξx} L` (n × r)
/// * `g_star = [∇_ξ h; ∇_ξ g_R]` (k × r)
/// * `b_dagger = Bᵀ(BBᵀ)⁻¹`, `sigma = A⁻¹Bᵀ(BA⁻¹Bᵀ)⁻¹B`, `pi = I − sigma`
#[derive(Debug, Clone)]
pub struct SensitivityBlocks {
    pub a: Matrix,
    pub a_inv: Matrix,
    pub b: Matrix,
    pub l_star: Matrix,
    pub g_star: Matrix,
    pub b_dagger: Matrix,
    pub sigma: Matrix,
    pub pi: Matrix,
    /// Inequality rows included in `b`, ascending.
    pub active_set_used: Vec<usize>,
    /// Number of equality rows at the top of `b`.
    pub p: usize,
    /// Total number of inequalities in the program.
    pub m: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `σ_min(Bᵀ)`; `None` when `b` is empty.
    pub sigma_min_bt: Option<f64>,
    pub fd_used: bool,
}

impl SensitivityBlocks {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn r(&self) -> usize {
        self.l_star.cols()
    }
}

/// Assembles the blocks at `point` with inequality rows `active_choice`,
/// which must satisfy `Iˢ ⊆ R ⊆ I`.
pub fn assemble_blocks(
    prob: &dyn ParametricProgram,
    point: &KktTriple,
    active_choice: &[usize],
    tol: &KktTolerances,
) -> Result<SensitivityBlocks, SensitivityError> {
    let class = classify_active_set(prob, point, tol.eps_act, tol.eps_strong)?;
    let mut rows = active_choice.to_vec();
    rows.sort_unstable();
    rows.dedup();
    let missing_strong: Vec<usize> = class
        .strongly_active
        .iter()
        .copied()
        .filter(|i| !rows.contains(i))
        .collect();
    let not_active: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|i| !class.active.contains(i))
        .collect();
    if !missing_strong.is_empty() || !not_active.is_empty() {
        return Err(SensitivityError::InvalidActiveChoice {
            missing_strong,
            not_active,
        });
    }

    let ev = Evaluator::new(prob);
    let (x, xi) = (&point.x, &point.xi);
    let n = x.len();
    let dims = prob.dims();

    let a = ev.hess_lagrangian(x, xi, &point.lambda, &point.mu)?;
    let (vals, _) = symmetric_eigen(&a);
    let lambda_min = vals.first().copied().unwrap_or(1.0);
    let lambda_max = vals.last().copied().unwrap_or(1.0);
    if n > 0 && lambda_min <= HESSIAN_FLOOR {
        return Err(SensitivityError::AssumptionViolated { lambda_min });
    }
    let a_inv = Cholesky::new(&a)
        .map_err(|_| SensitivityError::AssumptionViolated { lambda_min })?
        .inverse();

    let b = ev.jac_h(x, xi)?.vstack(&ev.jac_g(x, xi)?.select_rows(&rows))?;
    let g_star = ev
        .param_jac_h(x, xi)?
        .vstack(&ev.param_jac_g(x, xi)?.select_rows(&rows))?;
    let l_star = ev.cross_lagrangian(x, xi, &point.lambda, &point.mu)?;

    let sigma_min_bt = if b.rows() == 0 {
        None
    } else {
        let sv = singular_values(&b);
        let smin = if b.rows() > n { 0.0 } else { sv[sv.len() - 1] };
        let tol_rank = tol.linalg.rank_tol * sv[0];
        if !(smin > tol_rank) {
            return Err(SensitivityError::RankDeficient {
                sigma_min: smin,
                tol: tol_rank,
            });
        }
        Some(smin)
    };

    let b_dagger = right_pseudoinverse(&b, &tol.linalg).map_err(map_linalg)?;
    let (sigma, pi) = oblique_projectors(&a, &b, &tol.linalg).map_err(map_linalg)?;
    // Empty blocks keep their column counts so products stay well shaped.
    let g_star = if g_star.rows() == 0 {
        Matrix::zeros(0, dims.r)
    } else {
        g_star
    };

    Ok(SensitivityBlocks {
        a,
        a_inv,
        b: if b.rows() == 0 { Matrix::zeros(0, n) } else { b },
        l_star,
        g_star,
        b_dagger,
        sigma,
        pi,
        active_set_used: rows,
        p: dims.p,
        m: dims.m,
        lambda_min,
        lambda_max,
        sigma_min_bt,
        fd_used: ev.fd_used(),
    })
}

fn map_linalg(e: LinalgError) -> SensitivityError {
    match e {
        LinalgError::SingularA { .. } => SensitivityError::AssumptionViolated { lambda_min: 0.0 },
        LinalgError::RankDeficient { sigma_min, tol } => SensitivityError::RankDeficient { sigma_min, tol },
        other => SensitivityError::Linalg(other),
    }
}
