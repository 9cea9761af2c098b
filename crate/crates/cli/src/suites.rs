//! Seeded property suites behind `tvopt verify`.
//!
//! Every instance draws from its own generator, seeded from the run seed, a
//! per-suite tag and the instance index, so suites and instances can run in
//! any order (and in parallel) with identical results.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use tvopt_core::ensembles::{random_full_row_rank, random_partitioned, random_qp, random_spd, seeded, QpEnsembleOptions};
use tvopt_core::flows::{endpoint, run_and_certify, set_variation_estimate, CertifyOptions, MovingPolyhedron, Signal, TimeVaryingScenario};
use tvopt_core::linalg::{block_inverse, identity_residual, norm2, oblique_projectors, spectral_extremes, sub, LinalgOptions, Matrix, SpectralExtremes};
use tvopt_core::nlp::{check_regularity, solve_instance, KktTolerances, ParametricQp, SolveOptions};
use tvopt_core::sensitivity::{
    assemble_blocks, default_fd_step, degenerate_lipschitz_bounds, fd_jacobian_oracle, local_lipschitz_bounds,
    solution_jacobian,
};

use crate::report::Record;
use crate::scenarios::{feasible_until, paper_ex1, paper_ex2, PAPER_EX2_V1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma1,
    FdJacobian,
    BlockInverse,
    BoundDomination,
    WeaklyActive,
    SweepingConsistency,
    SetVariation,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Lemma1,
        Suite::FdJacobian,
        Suite::BlockInverse,
        Suite::BoundDomination,
        Suite::WeaklyActive,
        Suite::SweepingConsistency,
        Suite::SetVariation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::FdJacobian => "fd-jacobian",
            Suite::BlockInverse => "block-inverse",
            Suite::BoundDomination => "bound-domination",
            Suite::WeaklyActive => "weakly-active",
            Suite::SweepingConsistency => "sweeping-consistency",
            Suite::SetVariation => "set-variation",
        }
    }

    pub fn run(self, seed: u64) -> SuiteOutcome {
        match self {
            Suite::Lemma1 => projector_bound(seed, 1000),
            Suite::FdJacobian => fd_jacobian(seed, 100),
            Suite::BlockInverse => block_inverse_residual(seed, 500),
            Suite::BoundDomination => bound_domination(seed, 100),
            Suite::WeaklyActive => weakly_active(),
            Suite::SweepingConsistency => sweeping_consistency(),
            Suite::SetVariation => set_variation(seed, 50),
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs the suites in parallel; results come back in input order.
pub fn run_suites(suites: &[Suite], seed: u64) -> Vec<SuiteOutcome> {
    suites.par_iter().map(|s| s.run(seed)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub checks: usize,
    pub passed: usize,
    /// Worst-case measurements, in a fixed order.
    pub metrics: Vec<(&'static str, f64)>,
    /// Why checks failed, if any did (first few only).
    pub failures: Vec<String>,
}

impl SuiteOutcome {
    pub fn ok(&self) -> bool {
        self.checks > 0 && self.passed == self.checks
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    pub fn record(&self) -> Record {
        let mut r = Record::new();
        r.text("suite", self.suite.name())
            .text("checks", self.checks.to_string())
            .text("passed", self.passed.to_string());
        for (k, v) in &self.metrics {
            r.real(k, *v);
        }
        r.text("status", if self.ok() { "PASS" } else { "FAIL" });
        for f in &self.failures {
            r.text("failure", f.clone());
        }
        r
    }
}

const MAX_FAILURES_SHOWN: usize = 5;

fn outcome(suite: Suite, results: Vec<Result<(), String>>, metrics: Vec<(&'static str, f64)>) -> SuiteOutcome {
    let checks = results.len();
    let passed = results.iter().filter(|r| r.is_ok()).count();
    let failures = results
        .into_iter()
        .filter_map(Result::err)
        .take(MAX_FAILURES_SHOWN)
        .collect();
    SuiteOutcome {
        suite,
        checks,
        passed,
        metrics,
        failures,
    }
}

/// SplitMix64 finalizer over (seed, tag, index).
pub fn instance_seed(seed: u64, tag: u64, index: usize) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_PROJECTOR: u64 = 1;
const TAG_QP: u64 = 2;
const TAG_PARTITIONED: u64 = 3;
const TAG_PROBES: u64 = 4;

fn fold_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

pub const PROJECTOR_TOL: f64 = 1e-9;

/// `max(‖Π‖, ‖Σ‖) ≤ √(λ_max/λ_min)` and the projector identities
/// `Σ² = Σ`, `ΠΣ = 0`, `BΠ = 0`, `ΣA⁻¹Bᵀ = A⁻¹Bᵀ`.
fn projector_bound(seed: u64, count: usize) -> SuiteOutcome {
    let rows: Vec<Result<(f64, f64), String>> = (0..count)
        .into_par_iter()
        .map(|i| {
            use rand::Rng;
            let mut rng = seeded(instance_seed(seed, TAG_PROJECTOR, i));
            let n = rng.gen_range(1..=8);
            let k = rng.gen_range(1..=n);
            let cond = 10f64.powf(rng.gen_range(0.0..=4.0));
            let a = random_spd(&mut rng, n, cond);
            let b = random_full_row_rank(&mut rng, k, n, 0.05);
            let (sigma, pi) = oblique_projectors(&a, &b, &LinalgOptions::default())
                .map_err(|e| format!("instance {i}: {e}"))?;
            let ratio = match spectral_extremes(&a).map_err(|e| format!("instance {i}: {e}"))? {
                SpectralExtremes::Symmetric { lambda_min, lambda_max } => (lambda_max / lambda_min).sqrt(),
                SpectralExtremes::General { .. } => return Err(format!("instance {i}: A not symmetric")),
            };
            let excess = sigma.norm2().max(pi.norm2()) - ratio;
            let a_inv_bt = tvopt_core::linalg::Cholesky::new(&a)
                .map_err(|e| format!("instance {i}: {e}"))?
                .solve(&b.transpose());
            let residual = [
                (&(&sigma * &sigma) - &sigma).max_abs(),
                (&pi * &sigma).max_abs(),
                (&b * &pi).max_abs(),
                (&(&sigma * &a_inv_bt) - &a_inv_bt).max_abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            Ok((excess, residual))
        })
        .collect();
    let max_excess = rows.iter().filter_map(|r| r.as_ref().ok()).map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let max_residual = fold_max(rows.iter().filter_map(|r| r.as_ref().ok()).map(|r| r.1));
    let results = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let (excess, residual) = r?;
            if excess > PROJECTOR_TOL {
                Err(format!("instance {i}: norm exceeds bound by {excess:e}"))
            } else if residual > PROJECTOR_TOL {
                Err(format!("instance {i}: algebra residual {residual:e}"))
            } else {
                Ok(())
            }
        })
        .collect();
    outcome(
        Suite::Lemma1,
        results,
        vec![("max_norm_excess", max_excess), ("max_algebra_residual", max_residual)],
    )
}

pub const FD_REL_TOL: f64 = 1e-5;
pub const DOMINATION_TOL: f64 = 1e-9;

/// One member of the random QP ensemble, with analytic and FD derivatives.
struct QpCase {
    scs: bool,
    dev_x: f64,
    dev_lm: f64,
    slack_x: f64,
    slack_lm: f64,
}

/// `‖analytic − fd‖_F / ‖analytic‖_F`, zero when they agree exactly.
pub fn rel_dev(analytic: &Matrix, fd: &Matrix) -> f64 {
    let diff = (analytic - fd).norm_fro();
    if diff == 0.0 {
        0.0
    } else {
        diff / analytic.norm_fro()
    }
}

fn qp_case(seed: u64, i: usize) -> Result<QpCase, String> {
    let fail = |e: &dyn fmt::Display| format!("instance {i}: {e}");
    let mut rng = seeded(instance_seed(seed, TAG_QP, i));
    let inst = random_qp(&mut rng, &QpEnsembleOptions::default());
    let tol = KktTolerances::default();
    let opts = SolveOptions::default();
    let sol = solve_instance(&inst.prob, &inst.xi, None, &opts).map_err(|e| fail(&e))?;
    let reg = check_regularity(&inst.prob, &sol, &tol).map_err(|e| fail(&e))?;
    let strong = reg.classification.strongly_active.clone();
    let blocks = assemble_blocks(&inst.prob, &sol, &strong, &tol).map_err(|e| fail(&e))?;
    let jac = solution_jacobian(&blocks).map_err(|e| fail(&e))?;
    let fd = fd_jacobian_oracle(&inst.prob, &inst.xi, default_fd_step(&inst.xi), Some(&sol), &opts)
        .map_err(|e| fail(&e))?;
    let bound = local_lipschitz_bounds(&blocks);
    Ok(QpCase {
        scs: reg.is_regular_minimizer && reg.scs,
        dev_x: rel_dev(&jac.dx_dxi, &fd.dx),
        dev_lm: rel_dev(&jac.multiplier_full, &fd.dmult),
        slack_x: bound.ell_x - jac.dx_dxi.norm2(),
        slack_lm: bound.ell_lm - jac.multiplier_full.norm2(),
    })
}

fn qp_cases(seed: u64, count: usize) -> Vec<Result<QpCase, String>> {
    (0..count).into_par_iter().map(|i| qp_case(seed, i)).collect()
}

/// Analytic solution Jacobian against central differences of re-solved
/// instances, on QPs whose regularity and strict complementarity are
/// verified first.
fn fd_jacobian(seed: u64, count: usize) -> SuiteOutcome {
    let cases = qp_cases(seed, count);
    let ok = || cases.iter().filter_map(|c| c.as_ref().ok());
    let metrics = vec![
        ("max_rel_dev_x", fold_max(ok().map(|c| c.dev_x))),
        ("max_rel_dev_multipliers", fold_max(ok().map(|c| c.dev_lm))),
        ("scs_verified", ok().filter(|c| c.scs).count() as f64),
    ];
    let results = cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let c = c.as_ref().map_err(Clone::clone)?;
            if !c.scs {
                Err(format!("instance {i}: not a regular minimizer with strict complementarity"))
            } else if c.dev_x > FD_REL_TOL || c.dev_lm > FD_REL_TOL {
                Err(format!("instance {i}: relative deviation {:e} / {:e}", c.dev_x, c.dev_lm))
            } else {
                Ok(())
            }
        })
        .collect();
    outcome(Suite::FdJacobian, results, metrics)
}

/// The local Lipschitz bounds dominate the spectral norms of the actual
/// Jacobians on the same ensemble as `fd-jacobian`.
fn bound_domination(seed: u64, count: usize) -> SuiteOutcome {
    let cases = qp_cases(seed, count);
    let ok = || cases.iter().filter_map(|c| c.as_ref().ok());
    let metrics = vec![
        ("min_slack_x", ok().map(|c| c.slack_x).fold(f64::INFINITY, f64::min)),
        ("min_slack_multipliers", ok().map(|c| c.slack_lm).fold(f64::INFINITY, f64::min)),
    ];
    let results = cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let c = c.as_ref().map_err(Clone::clone)?;
            if c.slack_x < -DOMINATION_TOL || c.slack_lm < -DOMINATION_TOL {
                Err(format!("instance {i}: slack {:e} / {:e}", c.slack_x, c.slack_lm))
            } else {
                Ok(())
            }
        })
        .collect();
    outcome(Suite::BoundDomination, results, metrics)
}

pub const BLOCK_INVERSE_TOL: f64 = 1e-10;

/// `‖I − M·M⁻¹‖_max` for the Schur-complement block inverse.
fn block_inverse_residual(seed: u64, count: usize) -> SuiteOutcome {
    let rows: Vec<Result<f64, String>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let inst = random_partitioned(&mut seeded(instance_seed(seed, TAG_PARTITIONED, i)), 1e6);
            let inv = block_inverse(&inst.a, &inst.b, &inst.c, &inst.d, &LinalgOptions::default())
                .map_err(|e| format!("instance {i} (cond {:.3e}): {e}", inst.cond))?;
            let full = tvopt_core::linalg::assemble_partitioned(&inst.a, &inst.b, &inst.c, &inst.d)
                .map_err(|e| format!("instance {i}: {e}"))?;
            Ok(identity_residual(&full, &inv.assemble()).max_abs())
        })
        .collect();
    let worst = fold_max(rows.iter().filter_map(|r| r.as_ref().ok().copied()));
    let results = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r? {
            res if res <= BLOCK_INVERSE_TOL => Ok(()),
            res => Err(format!("instance {i}: residual {res:e}")),
        })
        .collect();
    outcome(Suite::BlockInverse, results, vec![("max_residual", worst)])
}

/// `min ½(x − ξ)²  s.t.  x ≤ 0` at `ξ = 0`, where the constraint is weakly
/// active: the one-sided slopes of `x*(ξ) = min(ξ, 0)` are 0 and 1, both
/// under the degenerate bound, and enumerating every admissible row choice
/// gives the same maximum as including all active rows.
fn weakly_active() -> SuiteOutcome {
    let prob = ParametricQp::unconstrained(Matrix::identity(1), vec![0.0], Matrix::from_rows(&[[-1.0]]))
        .with_inequalities(Matrix::identity(1), vec![0.0], Matrix::zeros(1, 1));
    let opts = SolveOptions::default();
    let tol = KktTolerances::default();
    let run = || -> Result<(f64, f64, f64, f64, f64), String> {
        let solve = |xi: f64| solve_instance(&prob, &[xi], None, &opts).map(|s| s.x[0]).map_err(|e| e.to_string());
        // A power of two keeps the difference quotients exact.
        let h = 2f64.powi(-20);
        let x0 = solve(0.0)?;
        let right = (solve(h)? - x0) / h;
        let left = (x0 - solve(-h)?) / h;
        let pt = solve_instance(&prob, &[0.0], None, &opts).map_err(|e| e.to_string())?;
        let rep = degenerate_lipschitz_bounds(&prob, &pt, &tol, true).map_err(|e| e.to_string())?;
        let (enum_x, enum_lm) = rep.enumerated_max().ok_or("enumeration missing")?;
        Ok((right, left, rep.report.ell_x, enum_x - rep.report.ell_x, enum_lm - rep.report.ell_lm))
    };
    match run() {
        Ok((right, left, ell_x, gap_x, gap_lm)) => {
            let results = vec![
                if right <= ell_x { Ok(()) } else { Err(format!("right slope {right} > {ell_x}")) },
                if left <= ell_x { Ok(()) } else { Err(format!("left slope {left} > {ell_x}")) },
                if gap_x.abs() <= 1e-12 && gap_lm.abs() <= 1e-12 {
                    Ok(())
                } else {
                    Err(format!("enumeration differs from shortcut by {gap_x:e} / {gap_lm:e}"))
                },
            ];
            outcome(
                Suite::WeaklyActive,
                results,
                vec![
                    ("right_slope", right),
                    ("left_slope", left),
                    ("ell_x", ell_x),
                    ("enumeration_gap_x", gap_x),
                    ("enumeration_gap_multipliers", gap_lm),
                ],
            )
        }
        Err(e) => outcome(Suite::WeaklyActive, vec![Err(e)], Vec::new()),
    }
}

/// Step sizes for the self-convergence study.
pub const CONSISTENCY_STEPS: [f64; 3] = [4e-3, 2e-3, 1e-3];
/// Horizon of the self-convergence study: well inside the window where the
/// moving set of the two-dimensional builtin is nonempty, so every step size
/// reaches the same final time.
pub const CONSISTENCY_HORIZON: f64 = 16.0;
/// Halving `h` must at least halve the positive part of the monotonicity
/// surrogate, up to this factor of slack.
pub const MONOTONICITY_SHRINK: f64 = 0.55;

/// First-order self-convergence of the catching-up scheme on the
/// two-dimensional builtin, and linear decay of the monotonicity surrogate's
/// positive part on both builtins.
fn sweeping_consistency() -> SuiteOutcome {
    let mut scenario = paper_ex2().scenario;
    scenario.horizon = CONSISTENCY_HORIZON;
    let x0 = [1.5, 0.5];
    let alpha = scenario.constants.alpha;
    let runs: Vec<Result<(Vec<f64>, f64), String>> = CONSISTENCY_STEPS
        .par_iter()
        .map(|&h| {
            let (_, end) = endpoint(&scenario, &x0, h).map_err(|e| e.to_string())?;
            let (rec, _) = run_and_certify(&scenario, &x0, h, alpha, 0.0, &CertifyOptions::default())
                .map_err(|e| e.to_string())?;
            Ok((end, rec.max_monotonicity_excess()))
        })
        .collect();
    let runs: Vec<(Vec<f64>, f64)> = match runs.into_iter().collect() {
        Ok(r) => r,
        Err(e) => return outcome(Suite::SweepingConsistency, vec![Err(e)], Vec::new()),
    };
    let d1 = norm2(&sub(&runs[0].0, &runs[1].0));
    let d2 = norm2(&sub(&runs[1].0, &runs[2].0));
    let ratio = d1 / d2;
    let mut results = vec![if (1.5..=2.5).contains(&ratio) {
        Ok(())
    } else {
        Err(format!("endpoint difference ratio {ratio}"))
    }];
    for w in runs.windows(2) {
        let (coarse, fine) = (w[0].1, w[1].1);
        results.push(if fine <= MONOTONICITY_SHRINK * coarse + 1e-12 {
            Ok(())
        } else {
            Err(format!("monotonicity excess {fine:e} after halving from {coarse:e}"))
        });
    }
    let mut metrics = vec![("endpoint_ratio", ratio)];
    for (name, (_, excess)) in ["monotonicity_excess_h4e-3", "monotonicity_excess_h2e-3", "monotonicity_excess_h1e-3"]
        .into_iter()
        .zip(&runs)
    {
        metrics.push((name, *excess));
    }

    // The sweeping run above never leaves the surrogate positive, so also
    // check the decay where it does: the scalar builtin's gradient flow,
    // whose excess sits in the first step from a distant start.
    let ex1 = paper_ex1();
    let excess: Result<Vec<f64>, String> = CONSISTENCY_STEPS
        .par_iter()
        .map(|&h| {
            run_and_certify(&ex1.scenario, &ex1.x0, h, ex1.a, 0.0, &CertifyOptions::default())
                .map(|(rec, _)| rec.max_monotonicity_excess())
                .map_err(|e| e.to_string())
        })
        .collect();
    match excess {
        Ok(excess) => {
            for w in excess.windows(2) {
                results.push(if w[1] <= MONOTONICITY_SHRINK * w[0] + 1e-12 {
                    Ok(())
                } else {
                    Err(format!("scalar monotonicity excess {:e} after halving from {:e}", w[1], w[0]))
                });
            }
            for (name, e) in [
                "scalar_monotonicity_excess_h4e-3",
                "scalar_monotonicity_excess_h2e-3",
                "scalar_monotonicity_excess_h1e-3",
            ]
            .into_iter()
            .zip(excess)
            {
                metrics.push((name, e));
            }
        }
        Err(e) => results.push(Err(e)),
    }
    outcome(Suite::SweepingConsistency, results, metrics)
}

pub const SET_VARIATION_TOL: f64 = 1e-6;

/// Empirical distance-to-set rate on the two-dimensional builtin against
/// `σ_max(V₁)/ω̂`, and on the halfline `x ≤ t` where it is exactly 1.
fn set_variation(seed: u64, probes: usize) -> SuiteOutcome {
    use rand::Rng;
    let p = paper_ex2();
    let end = feasible_until(&p.scenario, 2000);
    let grid: Vec<f64> = (0..=2000).map(|k| end * k as f64 / 2000.0).collect();
    let pts: Vec<Vec<f64>> = (0..probes)
        .map(|i| {
            let mut rng = seeded(instance_seed(seed, TAG_PROBES, i));
            vec![rng.gen_range(-5.0..=5.0), rng.gen_range(-5.0..=5.0)]
        })
        .collect();
    let sigma_v1 = norm2(&PAPER_EX2_V1);
    let mut results = Vec::new();
    let mut metrics = Vec::new();
    match (set_variation_estimate(&p.scenario, &pts, &grid), p.scenario.constants.omega) {
        (Ok(est), Some(omega)) => {
            let limit = sigma_v1 / omega;
            metrics.push(("estimate", est));
            metrics.push(("limit", limit));
            results.push(if est <= limit + SET_VARIATION_TOL {
                Ok(())
            } else {
                Err(format!("estimate {est} exceeds {limit}"))
            });
        }
        (Err(e), _) => results.push(Err(e.to_string())),
        (_, None) => results.push(Err("no face constant for the builtin".into())),
    }

    let halfline = TimeVaryingScenario::new(
        "halfline",
        Matrix::identity(1),
        Signal::Constant(vec![0.0]),
        Some(MovingPolyhedron {
            u: Matrix::identity(1),
            v: Signal::Affine {
                slope: vec![1.0],
                offset: vec![0.0],
            },
        }),
        5.0,
    )
    .expect("valid scenario");
    let grid: Vec<f64> = (0..=50).map(|k| 0.1 * k as f64).collect();
    match set_variation_estimate(&halfline, &[vec![10.0]], &grid) {
        Ok(rate) => {
            metrics.push(("halfline_rate", rate));
            results.push(if (rate - 1.0).abs() <= 1e-9 {
                Ok(())
            } else {
                Err(format!("halfline rate {rate}"))
            });
        }
        Err(e) => results.push(Err(e.to_string())),
    }
    outcome(Suite::SetVariation, results, metrics)
}
