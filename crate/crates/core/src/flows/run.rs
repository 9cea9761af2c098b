use rayon::prelude::*;

use super::{instantaneous_optimizer, project_polyhedron, FlowError, ScenarioKind, TimeVaryingScenario};
use crate::linalg::{axpy, dot, norm2, sub};

/// One catching-up step of the sweeping gradient flow: an explicit gradient
/// step, then projection onto the set at the new time.
pub fn sweeping_flow_step(
    scenario: &TimeVaryingScenario,
    x: &[f64],
    t: f64,
    h: f64,
) -> Result<Vec<f64>, FlowError> {
    if !(h > 0.0) {
        return Err(FlowError::InvalidStep(h));
    }
    let poly = scenario.constraints.as_ref().ok_or(FlowError::WrongKind("sweeping step needs constraints"))?;
    let y = axpy(-h, &scenario.gradient(x, t), x);
    project_polyhedron(&y, &poly.u, &poly.v.value(t + h)).map_err(|e| match e {
        FlowError::EmptyPolyhedron { .. } => FlowError::EmptyPolyhedron { t: Some(t + h) },
        other => other,
    })
}

/// One classical RK4 step of `ẋ = −∇_x f̂(x − c(t))`.
pub fn gradient_flow_step(scenario: &TimeVaryingScenario, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>, FlowError> {
    if !(h > 0.0) {
        return Err(FlowError::InvalidStep(h));
    }
    if scenario.kind() != ScenarioKind::Unconstrained {
        return Err(FlowError::WrongKind("gradient flow step needs an unconstrained scenario"));
    }
    let f = |x: &[f64], t: f64| -> Vec<f64> { scenario.gradient(x, t).into_iter().map(|g| -g).collect() };
    let k1 = f(x, t);
    let k2 = f(&axpy(h / 2.0, &k1, x), t + h / 2.0);
    let k3 = f(&axpy(h / 2.0, &k2, x), t + h / 2.0);
    let k4 = f(&axpy(h, &k3, x), t + h);
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn step(scenario: &TimeVaryingScenario, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>, FlowError> {
    match scenario.kind() {
        ScenarioKind::Unconstrained => gradient_flow_step(scenario, x, t, h),
        ScenarioKind::PolyhedralSweeping => sweeping_flow_step(scenario, x, t, h),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub x_alg: Vec<Vec<f64>>,
    pub x_opt: Vec<Vec<f64>>,
    pub err: Vec<f64>,
    /// Positive part of `max_i (Ux − v(t))_i`; zero without constraints.
    pub feasibility_violation: Vec<f64>,
    /// `⟨(x_{k+1} − x_k)/h, x_k − x*_k⟩ + a‖x_k − x*_k‖²`; `None` on the last
    /// point, which has no successor.
    pub monotonicity_lhs: Vec<Option<f64>>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest error over grid times in `[t0, t1]`.
    pub fn max_err_in(&self, t0: f64, t1: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.err)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(_, e)| *e)
            .reduce(f64::max)
    }

    pub fn max_monotonicity_excess(&self) -> f64 {
        self.monotonicity_lhs.iter().flatten().fold(0.0_f64, |a, v| a.max(*v))
    }

    pub fn max_feasibility_violation(&self) -> f64 {
        self.feasibility_violation.iter().fold(0.0_f64, |a, v| a.max(*v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingCertificate {
    /// `ℓ_t / a`.
    pub bound: f64,
    /// Largest error over the estimation window.
    pub limsup_estimate: f64,
    pub window: (f64, f64),
    /// Once the error enters the ball it stays within `bound + invariance_tol`.
    pub invariance_ok: bool,
    pub a_used: f64,
    /// Last grid time at which the set was nonempty.
    pub feasible_window_end: f64,
    /// The run stopped early because the set became empty.
    pub truncated: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    /// Burn-in before the estimation window, in units of `1/α`.
    pub burn_in_time_constants: f64,
    /// Fraction of the (feasible) run covered by the estimation window.
    pub window_fraction: f64,
    pub invariance_tol: f64,
    /// Slack on `limsup_estimate ≤ bound`.
    pub bound_tol: f64,
    /// Tolerance for the initial point's feasibility.
    pub feas_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            burn_in_time_constants: 3.0,
            window_fraction: 0.25,
            invariance_tol: 5e-3,
            bound_tol: 1e-3,
            feas_tol: 1e-8,
        }
    }
}

/// Integrates the scenario's flow from `x0` over its horizon with step `h`,
/// recording the tracking error against the instantaneous optimizer, and
/// checks it against `ℓ_t / a`. A set that becomes empty ends the run; the
/// certificate then covers only the feasible window.
pub fn run_and_certify(
    scenario: &TimeVaryingScenario,
    x0: &[f64],
    h: f64,
    a: f64,
    ell_t: f64,
    opts: &CertifyOptions,
) -> Result<(TrajectoryRecord, TrackingCertificate), FlowError> {
    if !(h > 0.0) {
        return Err(FlowError::InvalidStep(h));
    }
    if !(a > 0.0) {
        return Err(FlowError::InvalidRate(a));
    }
    if x0.len() != scenario.n() {
        return Err(FlowError::Dimension("initial point"));
    }
    let viol0 = scenario.constraint_max(x0, 0.0);
    if viol0 > opts.feas_tol {
        return Err(FlowError::InfeasibleStart(viol0));
    }

    let steps = (scenario.horizon / h).round() as usize;
    let kink_tol = 1e-9 * h;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(steps + 1),
        x_alg: Vec::with_capacity(steps + 1),
        x_opt: Vec::with_capacity(steps + 1),
        err: Vec::with_capacity(steps + 1),
        feasibility_violation: Vec::with_capacity(steps + 1),
        monotonicity_lhs: Vec::with_capacity(steps + 1),
    };
    let mut x = x0.to_vec();
    let mut truncated = false;
    for k in 0..=steps {
        let t = k as f64 * h;
        let xs = match instantaneous_optimizer(scenario, t) {
            Ok(kkt) => kkt.x,
            Err(_) if k > 0 => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        rec.times.push(t);
        rec.err.push(norm2(&sub(&x, &xs)));
        rec.feasibility_violation.push(scenario.constraint_max(&x, t).max(0.0));
        rec.x_opt.push(xs);
        rec.x_alg.push(x.clone());
        rec.monotonicity_lhs.push(None);
        if k == steps {
            break;
        }
        let next = match step(scenario, &x, t, h) {
            Ok(next) => next,
            Err(FlowError::EmptyPolyhedron { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let vel: Vec<f64> = next.iter().zip(&x).map(|(b, a)| (b - a) / h).collect();
        // At a kink the optimizer's velocity is undefined; evaluate the
        // surrogate half a step later instead.
        let gap = if scenario.is_kink(t, kink_tol) {
            let mid: Vec<f64> = x.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
            sub(&mid, &instantaneous_optimizer(scenario, t + h / 2.0)?.x)
        } else {
            sub(&x, &rec.x_opt[k])
        };
        *rec.monotonicity_lhs.last_mut().expect("pushed above") = Some(dot(&vel, &gap) + a * dot(&gap, &gap));
        x = next;
    }

    let end = *rec.times.last().expect("the initial point is always recorded");
    let burn_in = opts.burn_in_time_constants / scenario.constants.alpha;
    let start = burn_in.max((1.0 - opts.window_fraction) * end).min(end);
    let limsup_estimate = rec.max_err_in(start, end).unwrap_or(rec.err[rec.err.len() - 1]);
    let bound = ell_t / a;
    let invariance_ok = match rec.err.iter().position(|e| *e <= bound) {
        Some(k) => rec.err[k..].iter().all(|e| *e <= bound + opts.invariance_tol),
        None => true,
    };
    let cert = TrackingCertificate {
        bound,
        limsup_estimate,
        window: (start, end),
        invariance_ok,
        a_used: a,
        feasible_window_end: end,
        truncated,
        passed: invariance_ok && limsup_estimate <= bound + opts.bound_tol,
    };
    Ok((rec, cert))
}

/// State at the end of the horizon (or of the feasible window).
pub fn endpoint(scenario: &TimeVaryingScenario, x0: &[f64], h: f64) -> Result<(f64, Vec<f64>), FlowError> {
    let steps = (scenario.horizon / h).round() as usize;
    let mut x = x0.to_vec();
    for k in 0..steps {
        let t = k as f64 * h;
        x = step(scenario, &x, t, h)?;
    }
    Ok((steps as f64 * h, x))
}

/// Empirical rate `max |d(z, X(t′)) − d(z, X(t))| / |t′ − t|` over the probes
/// and adjacent grid times.
pub fn set_variation_estimate(
    scenario: &TimeVaryingScenario,
    probes: &[Vec<f64>],
    t_grid: &[f64],
) -> Result<f64, FlowError> {
    let poly = scenario
        .constraints
        .as_ref()
        .ok_or(FlowError::WrongKind("set variation needs constraints"))?;
    if probes.is_empty() || t_grid.len() < 2 {
        return Err(FlowError::Dimension("set variation needs probes and at least two times"));
    }
    let dist = |z: &[f64], t: f64| -> Result<f64, FlowError> {
        let p = project_polyhedron(z, &poly.u, &poly.v.value(t)).map_err(|e| match e {
            FlowError::EmptyPolyhedron { .. } => FlowError::EmptyPolyhedron { t: Some(t) },
            other => other,
        })?;
        Ok(norm2(&sub(z, &p)))
    };
    let rates: Vec<Result<f64, FlowError>> = probes
        .par_iter()
        .map(|z| {
            let mut best = 0.0_f64;
            let mut prev = dist(z, t_grid[0])?;
            for w in t_grid.windows(2) {
                let d = dist(z, w[1])?;
                best = best.max((d - prev).abs() / (w[1] - w[0]).abs());
                prev = d;
            }
            Ok(best)
        })
        .collect();
    let mut best = 0.0_f64;
    for r in rates {
        best = best.max(r?);
    }
    Ok(best)
}
