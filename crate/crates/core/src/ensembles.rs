//! Seeded random instances for property checks and verification suites.
//!
//! Every generator draws from a caller-supplied RNG, so a fixed seed gives a
//! fixed ensemble on every platform.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{singular_values, Matrix, PivotedQr};
use crate::nlp::{KktTriple, ParametricQp};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with entries uniform in `[-1, 1]`.
pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("finite entries")
}

pub fn uniform_vec<R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// Random orthogonal matrix (Q factor of a uniform matrix).
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    loop {
        let m = uniform_matrix(rng, n, n);
        if let Ok(qr) = PivotedQr::new(&m) {
            if qr.rank(1e-6) == n {
                return qr.q().clone();
            }
        }
    }
}

/// `Q diag(s) Qᵀ` with eigenvalues log-uniform in `[scale, scale·cond]`,
/// the extremes pinned so the condition number is exactly `cond`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, cond: f64) -> Matrix {
    let q = random_orthogonal(rng, n);
    let scale = 10f64.powf(rng.gen_range(-1.0..=1.0));
    let lc = cond.log10();
    let mut s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=lc)).collect();
    if n >= 2 {
        s[0] = 0.0;
        s[n - 1] = lc;
    }
    let d = Matrix::from_diag(&s.iter().map(|e| scale * 10f64.powf(*e)).collect::<Vec<_>>());
    (&(&q * &d) * &q.transpose()).symmetrized()
}

/// `k × n` matrix with `σ_min ≥ min_sigma`, redrawn until it qualifies.
pub fn random_full_row_rank<R: Rng>(rng: &mut R, k: usize, n: usize, min_sigma: f64) -> Matrix {
    assert!(k <= n, "cannot have full row rank with more rows than columns");
    loop {
        let b = uniform_matrix(rng, k, n);
        if k == 0 || singular_values(&b).last().copied().unwrap_or(0.0) >= min_sigma {
            return b;
        }
    }
}

/// A square matrix `[[A, C], [B, D]]` with prescribed condition number.
#[derive(Debug, Clone)]
pub struct PartitionedInstance {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub cond: f64,
}

/// `n1 ∈ 1..=5`, `n2 ∈ 1..=4`, `log10 κ ∈ U[0, log10 max_cond]`.
pub fn random_partitioned<R: Rng>(rng: &mut R, max_cond: f64) -> PartitionedInstance {
    let n1 = rng.gen_range(1..=5);
    let n2 = rng.gen_range(1..=4);
    let n = n1 + n2;
    let cond = 10f64.powf(rng.gen_range(0.0..=max_cond.log10()));
    let u = random_orthogonal(rng, n);
    let v = random_orthogonal(rng, n);
    let lc = cond.log10();
    let mut s: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(0.0..=lc))).collect();
    s[0] = 1.0;
    s[n - 1] = cond;
    let m = &(&u * &Matrix::from_diag(&s)) * &v.transpose();
    PartitionedInstance {
        a: m.submatrix(0, 0, n1, n1),
        c: m.submatrix(0, n1, n1, n2),
        b: m.submatrix(n1, 0, n2, n1),
        d: m.submatrix(n1, n1, n2, n2),
        cond,
    }
}

/// A strongly convex parametric QP built around a known KKT point with
/// strict complementarity and LICQ margins.
#[derive(Debug, Clone)]
pub struct RandomQp {
    pub prob: ParametricQp,
    pub xi: Vec<f64>,
    pub point: KktTriple,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct QpEnsembleOptions {
    pub max_n: usize,
    pub max_m: usize,
    pub max_p: usize,
    pub max_r: usize,
    pub hessian_cond: f64,
    /// Lower bound on active multipliers and inactive slacks.
    pub margin: f64,
    /// Lower bound on `σ_min` of the active constraint rows.
    pub min_sigma: f64,
}

impl Default for QpEnsembleOptions {
    fn default() -> Self {
        Self {
            max_n: 6,
            max_m: 4,
            max_p: 2,
            max_r: 3,
            hessian_cond: 1e2,
            margin: 0.5,
            min_sigma: 0.1,
        }
    }
}

pub fn random_qp<R: Rng>(rng: &mut R, opts: &QpEnsembleOptions) -> RandomQp {
    let n = rng.gen_range(2..=opts.max_n);
    let m = rng.gen_range(1..=opts.max_m);
    let p = rng.gen_range(0..=opts.max_p.min(n - 1));
    let r = rng.gen_range(1..=opts.max_r);
    let k_max = (n - p).min(m);
    let k = rng.gen_range(0..=k_max);

    let mut idx: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let mut active: Vec<usize> = idx[..k].to_vec();
    active.sort_unstable();

    let (c, u) = loop {
        let c = uniform_matrix(rng, p, n);
        let u = uniform_matrix(rng, m, n);
        let stacked = c.vstack(&u.select_rows(&active)).expect("same width");
        let ok = stacked.rows() == 0 || singular_values(&stacked).last().copied().unwrap_or(0.0) >= opts.min_sigma;
        if ok {
            break (c, u);
        }
    };

    let g = random_spd(rng, n, opts.hessian_cond);
    let e = uniform_matrix(rng, n, r);
    let d_xi = uniform_matrix(rng, p, r);
    let v_xi = uniform_matrix(rng, m, r);
    let x = uniform_vec(rng, n, -1.0, 1.0);
    let xi = uniform_vec(rng, r, -1.0, 1.0);
    let lambda = uniform_vec(rng, p, -1.0, 1.0);
    let mut mu = vec![0.0; m];
    let mut slack = vec![0.0; m];
    for i in 0..m {
        if active.contains(&i) {
            mu[i] = rng.gen_range(opts.margin..=opts.margin + 1.5);
        } else {
            slack[i] = rng.gen_range(opts.margin..=opts.margin + 1.5);
        }
    }

    let e_xi = e.mul_vec(&xi);
    let gx = g.mul_vec(&x);
    let ct_l = c.tr_mul_vec(&lambda);
    let ut_m = u.tr_mul_vec(&mu);
    let a: Vec<f64> = (0..n).map(|i| -gx[i] - e_xi[i] - ct_l[i] - ut_m[i]).collect();
    let cx = c.mul_vec(&x);
    let dxi = d_xi.mul_vec(&xi);
    let d: Vec<f64> = (0..p).map(|i| cx[i] - dxi[i]).collect();
    let ux = u.mul_vec(&x);
    let vxi = v_xi.mul_vec(&xi);
    let v: Vec<f64> = (0..m).map(|i| ux[i] - vxi[i] + slack[i]).collect();

    let prob = ParametricQp::unconstrained(g, a, e)
        .with_equalities(c, d, d_xi)
        .with_inequalities(u, v, v_xi);
    RandomQp {
        prob,
        point: KktTriple {
            xi: xi.clone(),
            x,
            lambda,
            mu,
        },
        xi,
        active,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use crate::nlp::{check_regularity, KktTolerances};

    #[test]
    fn spd_condition_is_pinned() {
        let mut rng = seeded(3);
        let a = random_spd(&mut rng, 4, 1e3);
        let (vals, _) = symmetric_eigen(&a);
        assert!((vals[3] / vals[0] / 1e3 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_qp_point_is_a_regular_minimizer() {
        let mut rng = seeded(11);
        for _ in 0..20 {
            let inst = random_qp(&mut rng, &QpEnsembleOptions::default());
            let rep = check_regularity(&inst.prob, &inst.point, &KktTolerances::default()).unwrap();
            assert!(rep.is_regular_minimizer, "{rep:?}");
            assert!(rep.scs);
            assert_eq!(rep.classification.active, inst.active);
        }
    }

    #[test]
    fn same_seed_same_ensemble() {
        let a = random_partitioned(&mut seeded(5), 1e6);
        let b = random_partitioned(&mut seeded(5), 1e6);
        assert_eq!(a.a, b.a);
        assert_eq!(a.cond, b.cond);
    }
}
