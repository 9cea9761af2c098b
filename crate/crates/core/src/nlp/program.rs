use std::sync::Arc;

use crate::linalg::Matrix;

/// Problem dimensions: `n` decisions, `p` equalities, `m` inequalities, `r`
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub r: usize,
}

/// A quadratic program frozen at one parameter value:
/// `min ½xᵀGx + aᵀx  s.t.  Cx = d,  Ux ≤ v`.
#[derive(Debug, Clone)]
pub struct QuadraticData {
    pub g: Matrix,
    pub a: Vec<f64>,
    pub c: Matrix,
    pub d: Vec<f64>,
    pub u: Matrix,
    pub v: Vec<f64>,
}

/// `min_x f(x, ξ)  s.t.  h(x, ξ) = 0,  g(x, ξ) ≤ 0`.
///
/// Only values are mandatory. Derivative methods return `None` when not
/// supplied; the evaluator then falls back to finite differences and flags
/// the result. Conventions:
///
/// * Jacobians are row-per-constraint (`p × n`, `m × n`, `p × r`, `m × r`).
/// * Cross derivatives `∇²_{ξx}` are `n × r` with entry `(i, j) = ∂²/∂x_i∂ξ_j`.
pub trait ParametricProgram: Send + Sync {
    fn dims(&self) -> Dims;

    fn objective(&self, x: &[f64], xi: &[f64]) -> f64;

    fn equalities(&self, _x: &[f64], _xi: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn inequalities(&self, _x: &[f64], _xi: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn objective_gradient(&self, _x: &[f64], _xi: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn equality_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn inequality_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn objective_hessian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn equality_hessian(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn inequality_hessian(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn objective_cross(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn equality_cross(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn inequality_cross(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn equality_param_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    fn inequality_param_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        None
    }

    /// The program at `xi` as a QP, when it is one. Enables the exact
    /// active-set solver.
    fn as_quadratic(&self, _xi: &[f64]) -> Option<QuadraticData> {
        None
    }
}

/// Parametric QP with affine parameter dependence:
///
/// ```text
/// min ½xᵀGx + (a + Eξ)ᵀx   s.t.   Cx = d + Dξ,   Ux ≤ v + Vξ
/// ```
#[derive(Debug, Clone)]
pub struct ParametricQp {
    pub g: Matrix,
    pub a: Vec<f64>,
    pub e: Matrix,
    pub c: Matrix,
    pub d: Vec<f64>,
    pub d_xi: Matrix,
    pub u: Matrix,
    pub v: Vec<f64>,
    pub v_xi: Matrix,
}

impl ParametricQp {
    /// Unconstrained QP `½xᵀGx + (a + Eξ)ᵀx`.
    pub fn unconstrained(g: Matrix, a: Vec<f64>, e: Matrix) -> Self {
        let n = g.rows();
        let r = e.cols();
        Self {
            g,
            a,
            e,
            c: Matrix::zeros(0, n),
            d: Vec::new(),
            d_xi: Matrix::zeros(0, r),
            u: Matrix::zeros(0, n),
            v: Vec::new(),
            v_xi: Matrix::zeros(0, r),
        }
    }

    pub fn with_equalities(mut self, c: Matrix, d: Vec<f64>, d_xi: Matrix) -> Self {
        self.c = c;
        self.d = d;
        self.d_xi = d_xi;
        self
    }

    pub fn with_inequalities(mut self, u: Matrix, v: Vec<f64>, v_xi: Matrix) -> Self {
        self.u = u;
        self.v = v;
        self.v_xi = v_xi;
        self
    }

    fn linear_term(&self, xi: &[f64]) -> Vec<f64> {
        let ex = self.e.mul_vec(xi);
        self.a.iter().zip(ex).map(|(a, b)| a + b).collect()
    }
}

impl ParametricProgram for ParametricQp {
    fn dims(&self) -> Dims {
        Dims {
            n: self.g.rows(),
            p: self.c.rows(),
            m: self.u.rows(),
            r: self.e.cols(),
        }
    }

    fn objective(&self, x: &[f64], xi: &[f64]) -> f64 {
        let gx = self.g.mul_vec(x);
        0.5 * crate::linalg::dot(x, &gx) + crate::linalg::dot(&self.linear_term(xi), x)
    }

    fn equalities(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let cx = self.c.mul_vec(x);
        let dx = self.d_xi.mul_vec(xi);
        (0..cx.len()).map(|i| cx[i] - self.d[i] - dx[i]).collect()
    }

    fn inequalities(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let ux = self.u.mul_vec(x);
        let vx = self.v_xi.mul_vec(xi);
        (0..ux.len()).map(|i| ux[i] - self.v[i] - vx[i]).collect()
    }

    fn objective_gradient(&self, x: &[f64], xi: &[f64]) -> Option<Vec<f64>> {
        let gx = self.g.mul_vec(x);
        Some(gx.iter().zip(self.linear_term(xi)).map(|(a, b)| a + b).collect())
    }

    fn equality_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(self.c.clone())
    }

    fn inequality_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(self.u.clone())
    }

    fn objective_hessian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(self.g.clone())
    }

    fn equality_hessian(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        let n = self.g.rows();
        Some(Matrix::zeros(n, n))
    }

    fn inequality_hessian(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        let n = self.g.rows();
        Some(Matrix::zeros(n, n))
    }

    fn objective_cross(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(self.e.clone())
    }

    fn equality_cross(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(self.g.rows(), self.e.cols()))
    }

    fn inequality_cross(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(self.g.rows(), self.e.cols()))
    }

    fn equality_param_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(-&self.d_xi)
    }

    fn inequality_param_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(-&self.v_xi)
    }

    fn as_quadratic(&self, xi: &[f64]) -> Option<QuadraticData> {
        let dx = self.d_xi.mul_vec(xi);
        let vx = self.v_xi.mul_vec(xi);
        Some(QuadraticData {
            g: self.g.clone(),
            a: self.linear_term(xi),
            c: self.c.clone(),
            d: self.d.iter().zip(dx).map(|(a, b)| a + b).collect(),
            u: self.u.clone(),
            v: self.v.iter().zip(vx).map(|(a, b)| a + b).collect(),
        })
    }
}

type ScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&[f64], &[f64]) -> Matrix + Send + Sync>;
type IndexedMatrixFn = Arc<dyn Fn(usize, &[f64], &[f64]) -> Matrix + Send + Sync>;

/// A program assembled from closures. Anything left unset is finite
/// differenced by the evaluator.
#[derive(Clone)]
pub struct ClosureProgram {
    dims: Dims,
    f: ScalarFn,
    h: Option<VectorFn>,
    g: Option<VectorFn>,
    grad_f: Option<VectorFn>,
    hess_f: Option<MatrixFn>,
    cross_f: Option<MatrixFn>,
    jac_h: Option<MatrixFn>,
    jac_g: Option<MatrixFn>,
    hess_h: Option<IndexedMatrixFn>,
    hess_g: Option<IndexedMatrixFn>,
    cross_h: Option<IndexedMatrixFn>,
    cross_g: Option<IndexedMatrixFn>,
    param_jac_h: Option<MatrixFn>,
    param_jac_g: Option<MatrixFn>,
}

impl ClosureProgram {
    pub fn new(
        n: usize,
        r: usize,
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dims: Dims { n, p: 0, m: 0, r },
            f: Arc::new(f),
            h: None,
            g: None,
            grad_f: None,
            hess_f: None,
            cross_f: None,
            jac_h: None,
            jac_g: None,
            hess_h: None,
            hess_g: None,
            cross_h: None,
            cross_g: None,
            param_jac_h: None,
            param_jac_g: None,
        }
    }

    pub fn with_equalities(
        mut self,
        p: usize,
        h: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.dims.p = p;
        self.h = Some(Arc::new(h));
        self
    }

    pub fn with_inequalities(
        mut self,
        m: usize,
        g: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.dims.m = m;
        self.g = Some(Arc::new(g));
        self
    }

    pub fn with_gradient(mut self, f: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad_f = Some(Arc::new(f));
        self
    }

    pub fn with_hessian(mut self, f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.hess_f = Some(Arc::new(f));
        self
    }

    pub fn with_cross(mut self, f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.cross_f = Some(Arc::new(f));
        self
    }

    pub fn with_equality_jacobian(
        mut self,
        f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.jac_h = Some(Arc::new(f));
        self
    }

    pub fn with_inequality_jacobian(
        mut self,
        f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.jac_g = Some(Arc::new(f));
        self
    }

    pub fn with_equality_hessian(
        mut self,
        f: impl Fn(usize, &[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.hess_h = Some(Arc::new(f));
        self
    }

    pub fn with_inequality_hessian(
        mut self,
        f: impl Fn(usize, &[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.hess_g = Some(Arc::new(f));
        self
    }

    pub fn with_equality_cross(
        mut self,
        f: impl Fn(usize, &[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.cross_h = Some(Arc::new(f));
        self
    }

    pub fn with_inequality_cross(
        mut self,
        f: impl Fn(usize, &[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.cross_g = Some(Arc::new(f));
        self
    }

    pub fn with_equality_param_jacobian(
        mut self,
        f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.param_jac_h = Some(Arc::new(f));
        self
    }

    pub fn with_inequality_param_jacobian(
        mut self,
        f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.param_jac_g = Some(Arc::new(f));
        self
    }
}

impl ParametricProgram for ClosureProgram {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn objective(&self, x: &[f64], xi: &[f64]) -> f64 {
        (self.f)(x, xi)
    }

    fn equalities(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        self.h.as_ref().map_or_else(Vec::new, |h| h(x, xi))
    }

    fn inequalities(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        self.g.as_ref().map_or_else(Vec::new, |g| g(x, xi))
    }

    fn objective_gradient(&self, x: &[f64], xi: &[f64]) -> Option<Vec<f64>> {
        self.grad_f.as_ref().map(|f| f(x, xi))
    }

    fn equality_jacobian(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        if self.dims.p == 0 {
            return Some(Matrix::zeros(0, self.dims.n));
        }
        self.jac_h.as_ref().map(|f| f(x, xi))
    }

    fn inequality_jacobian(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        if self.dims.m == 0 {
            return Some(Matrix::zeros(0, self.dims.n));
        }
        self.jac_g.as_ref().map(|f| f(x, xi))
    }

    fn objective_hessian(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        self.hess_f.as_ref().map(|f| f(x, xi))
    }

    fn equality_hessian(&self, i: usize, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        self.hess_h.as_ref().map(|f| f(i, x, xi))
    }

    fn inequality_hessian(&self, i: usize, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        self.hess_g.as_ref().map(|f| f(i, x, xi))
    }

    fn objective_cross(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        self.cross_f.as_ref().map(|f| f(x, xi))
    }

    fn equality_cross(&self, i: usize, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        self.cross_h.as_ref().map(|f| f(i, x, xi))
    }

    fn inequality_cross(&self, i: usize, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        self.cross_g.as_ref().map(|f| f(i, x, xi))
    }

    fn equality_param_jacobian(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        if self.dims.p == 0 {
            return Some(Matrix::zeros(0, self.dims.r));
        }
        self.param_jac_h.as_ref().map(|f| f(x, xi))
    }

    fn inequality_param_jacobian(&self, x: &[f64], xi: &[f64]) -> Option<Matrix> {
        if self.dims.m == 0 {
            return Some(Matrix::zeros(0, self.dims.r));
        }
        self.param_jac_g.as_ref().map(|f| f(x, xi))
    }
}
