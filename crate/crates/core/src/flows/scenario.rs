use super::{FlowError, Signal};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::nlp::{solve_instance, solve_qp, Dims, KktTriple, NlpError, ParametricProgram, QpOptions, QuadraticData, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Unconstrained,
    PolyhedralSweeping,
}

/// Moving polyhedron `{x | Ux ≤ v(t)}`.
#[derive(Debug, Clone)]
pub struct MovingPolyhedron {
    pub u: Matrix,
    pub v: Signal,
}

/// Problem-wide constants. `alpha`/`beta` come from the cost; the rest are
/// filled in by whoever builds the scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConstants {
    pub alpha: f64,
    pub beta: f64,
    pub ell_c: f64,
    pub ell_v: f64,
    pub omega: Option<f64>,
}

/// `min_x f̂(x − c(t))  s.t.  Ux ≤ v(t)` with `f̂(y) = yᵀQy`.
#[derive(Debug, Clone)]
pub struct TimeVaryingScenario {
    pub name: String,
    pub q: Matrix,
    pub c: Signal,
    pub constraints: Option<MovingPolyhedron>,
    pub horizon: f64,
    pub constants: ScenarioConstants,
}

impl TimeVaryingScenario {
    /// Builds the scenario and derives `α = 2λ_min(Q)`, `β = 2λ_max(Q)`,
    /// and the Lipschitz constants of `c` and `v` over the horizon.
    pub fn new(
        name: impl Into<String>,
        q: Matrix,
        c: Signal,
        constraints: Option<MovingPolyhedron>,
        horizon: f64,
    ) -> Result<Self, FlowError> {
        let n = q.rows();
        if !q.is_square() || c.dim() != n {
            return Err(FlowError::Dimension("cost matrix and target signal disagree"));
        }
        if let Some(poly) = &constraints {
            if poly.u.cols() != n || poly.v.dim() != poly.u.rows() {
                return Err(FlowError::Dimension("constraint matrix and bound signal disagree"));
            }
        }
        if !(horizon > 0.0) {
            return Err(FlowError::InvalidHorizon(horizon));
        }
        if !q.is_symmetric(1e-12) {
            return Err(FlowError::NotStronglyConvex);
        }
        let (vals, _) = symmetric_eigen(&q);
        if !(vals[0] > 0.0) {
            return Err(FlowError::NotStronglyConvex);
        }
        let samples = ((horizon * 1000.0) as usize).clamp(1000, 200_000);
        let ell_c = c.lipschitz_constant(0.0, horizon, samples);
        let ell_v = constraints
            .as_ref()
            .map_or(0.0, |p| p.v.lipschitz_constant(0.0, horizon, samples));
        Ok(Self {
            name: name.into(),
            constants: ScenarioConstants {
                alpha: 2.0 * vals[0],
                beta: 2.0 * vals[n - 1],
                ell_c,
                ell_v,
                omega: None,
            },
            q,
            c,
            constraints,
            horizon,
        })
    }

    pub fn kind(&self) -> ScenarioKind {
        match self.constraints {
            Some(_) => ScenarioKind::PolyhedralSweeping,
            None => ScenarioKind::Unconstrained,
        }
    }

    pub fn n(&self) -> usize {
        self.q.rows()
    }

    /// `∇_x f̂(x − c(t)) = 2Q(x − c(t))`.
    pub fn gradient(&self, x: &[f64], t: f64) -> Vec<f64> {
        let y = crate::linalg::sub(x, &self.c.value(t));
        self.q.mul_vec(&y).into_iter().map(|v| 2.0 * v).collect()
    }

    /// Largest `(Ux − v(t))_i`, or `−∞` without constraints.
    pub fn constraint_max(&self, x: &[f64], t: f64) -> f64 {
        match &self.constraints {
            None => f64::NEG_INFINITY,
            Some(p) => {
                let ux = p.u.mul_vec(x);
                let v = p.v.value(t);
                ux.iter().zip(&v).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Whether any signal has a kink within `tol` of `t`.
    pub fn is_kink(&self, t: f64, tol: f64) -> bool {
        self.c.is_kink(t, tol) || self.constraints.as_ref().is_some_and(|p| p.v.is_kink(t, tol))
    }

    pub fn program(&self) -> ScenarioProgram<'_> {
        ScenarioProgram { scenario: self }
    }
}

/// The scenario as a parametric program in `ξ = (t)`.
pub struct ScenarioProgram<'a> {
    scenario: &'a TimeVaryingScenario,
}

impl ParametricProgram for ScenarioProgram<'_> {
    fn dims(&self) -> Dims {
        Dims {
            n: self.scenario.n(),
            p: 0,
            m: self.scenario.constraints.as_ref().map_or(0, |p| p.u.rows()),
            r: 1,
        }
    }

    fn objective(&self, x: &[f64], xi: &[f64]) -> f64 {
        let y = crate::linalg::sub(x, &self.scenario.c.value(xi[0]));
        crate::linalg::dot(&y, &self.scenario.q.mul_vec(&y))
    }

    fn inequalities(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        match &self.scenario.constraints {
            None => Vec::new(),
            Some(p) => {
                let v = p.v.value(xi[0]);
                p.u.mul_vec(x).iter().zip(&v).map(|(a, b)| a - b).collect()
            }
        }
    }

    fn objective_gradient(&self, x: &[f64], xi: &[f64]) -> Option<Vec<f64>> {
        Some(self.scenario.gradient(x, xi[0]))
    }

    fn equality_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(0, self.scenario.n()))
    }

    fn equality_param_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(0, 1))
    }

    fn inequality_jacobian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        let n = self.scenario.n();
        Some(
            self.scenario
                .constraints
                .as_ref()
                .map_or_else(|| Matrix::zeros(0, n), |p| p.u.clone()),
        )
    }

    fn objective_hessian(&self, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(self.scenario.q.scale(2.0))
    }

    fn inequality_hessian(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        let n = self.scenario.n();
        Some(Matrix::zeros(n, n))
    }

    /// `∂/∂t ∇_x f = −2Q ċ(t)`.
    fn objective_cross(&self, _x: &[f64], xi: &[f64]) -> Option<Matrix> {
        let dc = self.scenario.c.derivative(xi[0]);
        let col: Vec<f64> = self.scenario.q.mul_vec(&dc).into_iter().map(|v| -2.0 * v).collect();
        Some(Matrix::column(&col))
    }

    fn inequality_cross(&self, _i: usize, _x: &[f64], _xi: &[f64]) -> Option<Matrix> {
        Some(Matrix::zeros(self.scenario.n(), 1))
    }

    fn inequality_param_jacobian(&self, _x: &[f64], xi: &[f64]) -> Option<Matrix> {
        Some(match &self.scenario.constraints {
            None => Matrix::zeros(0, 1),
            Some(p) => Matrix::column(&p.v.derivative(xi[0]).iter().map(|v| -v).collect::<Vec<_>>()),
        })
    }

    fn as_quadratic(&self, xi: &[f64]) -> Option<QuadraticData> {
        let s = self.scenario;
        let n = s.n();
        let c = s.c.value(xi[0]);
        let (u, v) = match &s.constraints {
            None => (Matrix::zeros(0, n), Vec::new()),
            Some(p) => (p.u.clone(), p.v.value(xi[0])),
        };
        Some(QuadraticData {
            g: s.q.scale(2.0),
            a: s.q.mul_vec(&c).into_iter().map(|v| -2.0 * v).collect(),
            c: Matrix::zeros(0, n),
            d: Vec::new(),
            u,
            v,
        })
    }
}

/// Euclidean projection onto `{y | Uy ≤ v}`.
pub fn project_polyhedron(z: &[f64], u: &Matrix, v: &[f64]) -> Result<Vec<f64>, FlowError> {
    let n = z.len();
    if u.rows() != v.len() || (u.rows() > 0 && u.cols() != n) {
        return Err(FlowError::Dimension("projection data"));
    }
    if u.rows() == 0 {
        return Ok(z.to_vec());
    }
    let qp = QuadraticData {
        g: Matrix::identity(n),
        a: z.iter().map(|x| -x).collect(),
        c: Matrix::zeros(0, n),
        d: Vec::new(),
        u: u.clone(),
        v: v.to_vec(),
    };
    match solve_qp(&qp, &QpOptions::default()) {
        Ok(sol) => Ok(sol.x),
        Err(NlpError::InfeasibleProblem { .. }) => Err(FlowError::EmptyPolyhedron { t: None }),
        Err(e) => Err(e.into()),
    }
}

/// The optimizer of the frozen problem at time `t`.
pub fn instantaneous_optimizer(scenario: &TimeVaryingScenario, t: f64) -> Result<KktTriple, FlowError> {
    match scenario.kind() {
        // f̂ has its unique minimizer at y = 0.
        ScenarioKind::Unconstrained => Ok(KktTriple {
            xi: vec![t],
            x: scenario.c.value(t),
            lambda: Vec::new(),
            mu: Vec::new(),
        }),
        ScenarioKind::PolyhedralSweeping => {
            Ok(solve_instance(&scenario.program(), &[t], None, &SolveOptions::default())?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let u = Matrix::identity(2);
        assert_eq!(project_polyhedron(&[0.5, -3.0], &u, &[1.0, 1.0]).unwrap(), vec![0.5, -3.0]);
        let corner = project_polyhedron(&[2.0, 2.0], &u, &[1.0, 1.0]).unwrap();
        assert!(corner.iter().all(|c| (c - 1.0).abs() < 1e-14));
        assert_eq!(
            project_polyhedron(&[2.0], &Matrix::identity(1), &[0.0]).unwrap(),
            vec![0.0]
        );
        let empty = Matrix::from_rows(&[[1.0], [-1.0]]);
        assert!(matches!(
            project_polyhedron(&[0.0], &empty, &[-1.0, -1.0]),
            Err(FlowError::EmptyPolyhedron { .. })
        ));
    }

    #[test]
    fn unconstrained_optimizer_follows_the_target() {
        let s = TimeVaryingScenario::new(
            "half-norm",
            Matrix::from_diag(&[0.5, 0.5]),
            Signal::Affine {
                slope: vec![1.0, -1.0],
                offset: vec![0.0, 2.0],
            },
            None,
            1.0,
        )
        .unwrap();
        assert_eq!(instantaneous_optimizer(&s, 0.5).unwrap().x, vec![0.5, 1.5]);
        assert_eq!(s.constants.alpha, 1.0);
        assert!((s.constants.ell_c - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constrained_optimizer_matches_projection() {
        // Q = I, so x*(t) is the projection of c(t) onto the set.
        let s = TimeVaryingScenario::new(
            "box",
            Matrix::identity(2),
            Signal::Constant(vec![2.0, -2.0]),
            Some(MovingPolyhedron {
                u: Matrix::identity(2),
                v: Signal::Affine {
                    slope: vec![1.0, 0.0],
                    offset: vec![0.0, 0.0],
                },
            }),
            2.0,
        )
        .unwrap();
        let kkt = instantaneous_optimizer(&s, 0.5).unwrap();
        assert!((kkt.x[0] - 0.5).abs() < 1e-12 && (kkt.x[1] + 2.0).abs() < 1e-12);
        assert!((kkt.mu[0] - 3.0).abs() < 1e-12);
    }
}
