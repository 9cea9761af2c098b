//! Derivative evaluation with finite-difference fallback.

use std::sync::atomic::{AtomicBool, Ordering};

use super::{NlpError, ParametricProgram};
use crate::linalg::{norm2, Matrix};

/// Relative step for first derivatives taken from function values.
const FIRST_ORDER_STEP: f64 = 6e-6;
/// Relative step for second derivatives taken from analytic first
/// derivatives.
const SECOND_FROM_FIRST_STEP: f64 = 1e-5;
/// Relative step for second derivatives taken from values alone. Larger than
/// the other two because the truncation/rounding balance for a second
/// difference sits near ε^{1/4}.
const SECOND_FROM_VALUES_STEP: f64 = 1e-4;

/// Wraps a program and serves every derivative the sensitivity code needs,
/// finite differencing whatever the program does not supply.
pub struct Evaluator<'a> {
    prob: &'a dyn ParametricProgram,
    allow_fd: bool,
    fd_used: AtomicBool,
}

impl<'a> Evaluator<'a> {
    pub fn new(prob: &'a dyn ParametricProgram) -> Self {
        Self {
            prob,
            allow_fd: true,
            fd_used: AtomicBool::new(false),
        }
    }

    /// Turns missing derivatives into errors instead of approximating them.
    pub fn strict(prob: &'a dyn ParametricProgram) -> Self {
        Self {
            allow_fd: false,
            ..Self::new(prob)
        }
    }

    pub fn program(&self) -> &'a dyn ParametricProgram {
        self.prob
    }

    /// True once any derivative has been finite differenced.
    pub fn fd_used(&self) -> bool {
        self.fd_used.load(Ordering::Relaxed)
    }

    fn fallback(&self, what: &'static str) -> Result<(), NlpError> {
        if !self.allow_fd {
            return Err(NlpError::MissingDerivative(what));
        }
        self.fd_used.store(true, Ordering::Relaxed);
        Ok(())
    }

    pub fn grad_f(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>, NlpError> {
        if let Some(g) = self.prob.objective_gradient(x, xi) {
            return Ok(g);
        }
        self.fallback("objective gradient")?;
        let jac = fd_jacobian(x, FIRST_ORDER_STEP, |y| vec![self.prob.objective(y, xi)]);
        Ok(jac.row(0).to_vec())
    }

    pub fn jac_h(&self, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        let n = self.prob.dims().n;
        if self.prob.dims().p == 0 {
            return Ok(Matrix::zeros(0, n));
        }
        if let Some(j) = self.prob.equality_jacobian(x, xi) {
            return Ok(j);
        }
        self.fallback("equality jacobian")?;
        Ok(fd_jacobian(x, FIRST_ORDER_STEP, |y| self.prob.equalities(y, xi)))
    }

    pub fn jac_g(&self, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        let n = self.prob.dims().n;
        if self.prob.dims().m == 0 {
            return Ok(Matrix::zeros(0, n));
        }
        if let Some(j) = self.prob.inequality_jacobian(x, xi) {
            return Ok(j);
        }
        self.fallback("inequality jacobian")?;
        Ok(fd_jacobian(x, FIRST_ORDER_STEP, |y| self.prob.inequalities(y, xi)))
    }

    pub fn hess_f(&self, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        if let Some(h) = self.prob.objective_hessian(x, xi) {
            return Ok(h);
        }
        self.fallback("objective hessian")?;
        if self.prob.objective_gradient(x, xi).is_some() {
            let jac = fd_jacobian(x, SECOND_FROM_FIRST_STEP, |y| {
                self.prob.objective_gradient(y, xi).unwrap_or_default()
            });
            return Ok(jac.symmetrized());
        }
        Ok(fd_hessian_from_values(x, |y| self.prob.objective(y, xi)))
    }

    fn constraint_hessian(&self, equality: bool, i: usize, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        let analytic = if equality {
            self.prob.equality_hessian(i, x, xi)
        } else {
            self.prob.inequality_hessian(i, x, xi)
        };
        if let Some(h) = analytic {
            return Ok(h);
        }
        self.fallback("constraint hessian")?;
        let row_of = |y: &[f64]| {
            let j = if equality {
                self.prob.equality_jacobian(y, xi)
            } else {
                self.prob.inequality_jacobian(y, xi)
            };
            j.map(|j| j.row(i).to_vec())
        };
        if row_of(x).is_some() {
            let jac = fd_jacobian(x, SECOND_FROM_FIRST_STEP, |y| row_of(y).unwrap_or_default());
            return Ok(jac.symmetrized());
        }
        Ok(fd_hessian_from_values(x, |y| {
            if equality {
                self.prob.equalities(y, xi)[i]
            } else {
                self.prob.inequalities(y, xi)[i]
            }
        }))
    }

    pub fn hess_h(&self, i: usize, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        self.constraint_hessian(true, i, x, xi)
    }

    pub fn hess_g(&self, i: usize, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        self.constraint_hessian(false, i, x, xi)
    }

    /// `∇²_xx L = ∇²f + Σ λ_i ∇²h_i + Σ μ_i ∇²g_i`. Terms with a zero
    /// multiplier are skipped.
    pub fn hess_lagrangian(
        &self,
        x: &[f64],
        xi: &[f64],
        lambda: &[f64],
        mu: &[f64],
    ) -> Result<Matrix, NlpError> {
        let mut h = self.hess_f(x, xi)?;
        for (i, &l) in lambda.iter().enumerate() {
            if l != 0.0 {
                h.add_assign_scaled(&self.hess_h(i, x, xi)?, l);
            }
        }
        for (i, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                h.add_assign_scaled(&self.hess_g(i, x, xi)?, m);
            }
        }
        Ok(h.symmetrized())
    }

    pub fn cross_f(&self, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        if let Some(c) = self.prob.objective_cross(x, xi) {
            return Ok(c);
        }
        self.fallback("objective cross derivative")?;
        if self.prob.objective_gradient(x, xi).is_some() {
            return Ok(fd_jacobian(xi, SECOND_FROM_FIRST_STEP, |z| {
                self.prob.objective_gradient(x, z).unwrap_or_default()
            }));
        }
        Ok(fd_mixed_from_values(x, xi, |y, z| self.prob.objective(y, z)))
    }

    fn constraint_cross(&self, equality: bool, i: usize, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        let analytic = if equality {
            self.prob.equality_cross(i, x, xi)
        } else {
            self.prob.inequality_cross(i, x, xi)
        };
        if let Some(c) = analytic {
            return Ok(c);
        }
        self.fallback("constraint cross derivative")?;
        let row_of = |y: &[f64], z: &[f64]| {
            let j = if equality {
                self.prob.equality_jacobian(y, z)
            } else {
                self.prob.inequality_jacobian(y, z)
            };
            j.map(|j| j.row(i).to_vec())
        };
        if row_of(x, xi).is_some() {
            return Ok(fd_jacobian(xi, SECOND_FROM_FIRST_STEP, |z| {
                row_of(x, z).unwrap_or_default()
            }));
        }
        Ok(fd_mixed_from_values(x, xi, |y, z| {
            if equality {
                self.prob.equalities(y, z)[i]
            } else {
                self.prob.inequalities(y, z)[i]
            }
        }))
    }

    /// `∇²_{ξx} L`, `n × r`.
    pub fn cross_lagrangian(
        &self,
        x: &[f64],
        xi: &[f64],
        lambda: &[f64],
        mu: &[f64],
    ) -> Result<Matrix, NlpError> {
        let mut c = self.cross_f(x, xi)?;
        for (i, &l) in lambda.iter().enumerate() {
            if l != 0.0 {
                c.add_assign_scaled(&self.constraint_cross(true, i, x, xi)?, l);
            }
        }
        for (i, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                c.add_assign_scaled(&self.constraint_cross(false, i, x, xi)?, m);
            }
        }
        Ok(c)
    }

    pub fn param_jac_h(&self, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        let d = self.prob.dims();
        if d.p == 0 {
            return Ok(Matrix::zeros(0, d.r));
        }
        if let Some(j) = self.prob.equality_param_jacobian(x, xi) {
            return Ok(j);
        }
        self.fallback("equality parameter jacobian")?;
        Ok(fd_jacobian(xi, FIRST_ORDER_STEP, |z| self.prob.equalities(x, z)))
    }

    pub fn param_jac_g(&self, x: &[f64], xi: &[f64]) -> Result<Matrix, NlpError> {
        let d = self.prob.dims();
        if d.m == 0 {
            return Ok(Matrix::zeros(0, d.r));
        }
        if let Some(j) = self.prob.inequality_param_jacobian(x, xi) {
            return Ok(j);
        }
        self.fallback("inequality parameter jacobian")?;
        Ok(fd_jacobian(xi, FIRST_ORDER_STEP, |z| self.prob.inequalities(x, z)))
    }
}

/// Central-difference Jacobian of `f` at `x`, one row per output, with step
/// `rel · (1 + ‖x‖)`.
pub fn fd_jacobian(x: &[f64], rel: f64, f: impl Fn(&[f64]) -> Vec<f64>) -> Matrix {
    let h = rel * (1.0 + norm2(x));
    let n = x.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut y = x.to_vec();
    for j in 0..n {
        y[j] = x[j] + h;
        let fp = f(&y);
        y[j] = x[j] - h;
        let fm = f(&y);
        y[j] = x[j];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    let rows = cols.first().map_or(0, Vec::len);
    let mut out = Matrix::zeros(rows, n);
    for (j, col) in cols.iter().enumerate() {
        out.set_col(j, col);
    }
    out
}

fn fd_hessian_from_values(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Matrix {
    let h = SECOND_FROM_VALUES_STEP * (1.0 + norm2(x));
    let n = x.len();
    let mut out = Matrix::zeros(n, n);
    let mut y = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn fd_mixed_from_values(x: &[f64], xi: &[f64], f: impl Fn(&[f64], &[f64]) -> f64) -> Matrix {
    let hx = SECOND_FROM_VALUES_STEP * (1.0 + norm2(x));
    let hz = SECOND_FROM_VALUES_STEP * (1.0 + norm2(xi));
    let mut out = Matrix::zeros(x.len(), xi.len());
    let mut y = x.to_vec();
    let mut z = xi.to_vec();
    for i in 0..x.len() {
        for j in 0..xi.len() {
            let mut eval = |si: f64, sj: f64| {
                y[i] = x[i] + si * hx;
                z[j] = xi[j] + sj * hz;
                let v = f(&y, &z);
                y[i] = x[i];
                z[j] = xi[j];
                v
            };
            out[(i, j)] = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hx * hz);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::ClosureProgram;

    fn value_only() -> ClosureProgram {
        // f = x₀²x₁ + sin(ξ₀)x₀,  g = x₀² + x₁ − ξ₀
        ClosureProgram::new(2, 1, |x, xi| x[0] * x[0] * x[1] + xi[0].sin() * x[0])
            .with_inequalities(1, |x, xi| vec![x[0] * x[0] + x[1] - xi[0]])
    }

    #[test]
    fn value_only_program_is_differenced_and_flagged() {
        let prob = value_only();
        let ev = Evaluator::new(&prob);
        let x = [0.7, -1.2];
        let xi = [0.4];
        let g = ev.grad_f(&x, &xi).unwrap();
        assert!((g[0] - (2.0 * 0.7 * -1.2 + 0.4_f64.sin())).abs() < 1e-8);
        assert!((g[1] - 0.49).abs() < 1e-8);
        assert!(ev.fd_used());

        let h = ev.hess_lagrangian(&x, &xi, &[], &[2.0]).unwrap();
        // ∇²f = [[2x₁, 2x₀], [2x₀, 0]], ∇²g = diag(2, 0)
        assert!((h[(0, 0)] - (2.0 * -1.2 + 4.0)).abs() < 1e-5);
        assert!((h[(0, 1)] - 1.4).abs() < 1e-5);
        assert!(h[(1, 1)].abs() < 1e-5);

        let c = ev.cross_lagrangian(&x, &xi, &[], &[2.0]).unwrap();
        assert!((c[(0, 0)] - 0.4_f64.cos()).abs() < 1e-5);
        assert!(c[(1, 0)].abs() < 1e-5);

        let gj = ev.param_jac_g(&x, &xi).unwrap();
        assert!((gj[(0, 0)] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn strict_evaluator_refuses_fallback() {
        let prob = value_only();
        let ev = Evaluator::strict(&prob);
        assert!(matches!(
            ev.grad_f(&[0.0, 0.0], &[0.0]),
            Err(NlpError::MissingDerivative(_))
        ));
        assert!(!ev.fd_used());
    }
}
