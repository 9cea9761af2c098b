//! The five verbs. Each returns the text it prints and the exit status it
//! implies, so the binary stays a thin shell around them.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use tvopt_core::flows::{run_and_certify, CertifyOptions, FlowError};
use tvopt_core::nlp::{check_regularity, solve_instance, KktTolerances, NlpError, SolveOptions};
use tvopt_core::sensitivity::{
    assemble_blocks, default_fd_step, degenerate_lipschitz_bounds, fd_jacobian_oracle, local_lipschitz_bounds,
    solution_jacobian, SensitivityError,
};

use crate::config::{ConfigError, ScenarioConfig};
use crate::report::{bound_record, write_trajectory_csv, Record, RunReport};
use crate::scenarios::{builtin, from_config, time_bound, ConstantsMode, Prepared};
use crate::suites::{rel_dev, run_suites, Suite, FD_REL_TOL};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for solver and run failures, 3 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 3,
            _ => 2,
        }
    }

    /// Short machine-greppable name of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Usage(_) => "ConfigError",
            CliError::Nlp(NlpError::InfeasibleProblem { .. }) => "InfeasibleProblem",
            CliError::Flow(FlowError::EmptyPolyhedron { .. }) => "InfeasibleProblem",
            CliError::Flow(FlowError::Nlp(NlpError::InfeasibleProblem { .. })) => "InfeasibleProblem",
            CliError::Flow(FlowError::InfeasibleStart(_)) => "InfeasibleStart",
            CliError::Sensitivity(SensitivityError::Nlp(NlpError::InfeasibleProblem { .. })) => "InfeasibleProblem",
            CliError::Nlp(_) | CliError::Sensitivity(_) => "SolverFailure",
            CliError::Flow(_) => "FlowFailure",
            CliError::Io { .. } => "IoError",
        }
    }
}

/// Text to print and whether the command's own check succeeded (exit 0)
/// or failed (exit 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub passed: bool,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, passed: true }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Where the scenario comes from and what to change about it.
#[derive(Debug, Clone, Default)]
pub struct ScenarioSource {
    pub config: Option<PathBuf>,
    pub builtin: Option<String>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
}

impl ScenarioSource {
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let mut p = match (&self.config, &self.builtin) {
            (Some(path), None) => from_config(&ScenarioConfig::load(path)?)?,
            (None, Some(name)) => builtin(name)?,
            (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --builtin, not both".into())),
            (None, None) => return Err(CliError::Usage("one of --config or --builtin is required".into())),
        };
        if let Some(h) = self.step {
            if !(h > 0.0) || !h.is_finite() {
                return Err(CliError::Usage(format!("--step must be positive, got {h}")));
            }
            p.step = h;
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) || !t.is_finite() {
                return Err(CliError::Usage(format!("--horizon must be positive, got {t}")));
            }
            p = p.with_horizon(t)?;
        }
        Ok(p)
    }
}

fn indices(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Instantaneous KKT point at time `t` and its regularity.
pub fn cmd_solve(p: &Prepared, t: f64) -> Result<Output, CliError> {
    let prog = p.scenario.program();
    let point = solve_instance(&prog, &[t], None, &SolveOptions::default())?;
    let reg = check_regularity(&prog, &point, &KktTolerances::default())?;
    log::info!("solved {} at t = {t}", p.scenario.name);
    let mut r = Record::new();
    r.text("scenario", p.scenario.name.clone())
        .real("t", t)
        .reals("x", &point.x)
        .reals("lambda", &point.lambda)
        .reals("mu", &point.mu)
        .real("kkt_residual", reg.kkt_residual)
        .flag("kkt_ok", reg.kkt_ok)
        .flag("licq", reg.licq)
        .opt_real("licq_sigma_min", reg.licq_sigma_min)
        .flag("ssosc", reg.ssosc)
        .opt_real("ssosc_min_eig", reg.ssosc_min_eig)
        .flag("scs", reg.scs)
        .text("active", indices(&reg.classification.active))
        .text("strongly_active", indices(&reg.classification.strongly_active))
        .text("weakly_active", indices(&reg.classification.weakly_active))
        .flag("regular", reg.is_regular_minimizer);
    Ok(Output::ok(r.to_string()))
}

/// Time derivative of the KKT point at `t`, with an optional comparison
/// against central differences. Without strict complementarity the
/// derivative does not exist; the degenerate bound is reported instead.
pub fn cmd_jacobian(p: &Prepared, t: f64, fd_check: bool) -> Result<Output, CliError> {
    let prog = p.scenario.program();
    let tol = KktTolerances::default();
    let opts = SolveOptions::default();
    let point = solve_instance(&prog, &[t], None, &opts)?;
    let reg = check_regularity(&prog, &point, &tol)?;
    let mut r = Record::new();
    r.text("scenario", p.scenario.name.clone()).real("t", t);

    if !reg.scs {
        log::warn!(
            "strict complementarity fails at t = {t} (weakly active rows {}); the solution map is not differentiable here, reporting the degenerate bound",
            indices(&reg.classification.weakly_active)
        );
        let deg = degenerate_lipschitz_bounds(&prog, &point, &tol, true)?;
        r.text("path", "degenerate").text("weakly_active", indices(&reg.classification.weakly_active));
        r.extend(&bound_record(&deg.report));
        if let Some((ex, elm)) = deg.enumerated_max() {
            r.real("enumerated_ell_x", ex).real("enumerated_ell_lm", elm);
        }
        return Ok(Output::ok(r.to_string()));
    }

    let blocks = assemble_blocks(&prog, &point, &reg.classification.strongly_active, &tol)?;
    let jac = solution_jacobian(&blocks)?;
    let bound = local_lipschitz_bounds(&blocks);
    r.text("path", "local")
        .reals("dx_dt", &jac.dx_dxi.col(0))
        .reals("dmult_dt", &jac.multiplier_full.col(0))
        .real("ell_x", bound.ell_x)
        .real("ell_lm", bound.ell_lm);

    let mut passed = true;
    if fd_check {
        let step = default_fd_step(&[t]);
        let fd = fd_jacobian_oracle(&prog, &[t], step, Some(&point), &opts)?;
        let dev_x = rel_dev(&jac.dx_dxi, &fd.dx);
        let dev_m = rel_dev(&jac.multiplier_full, &fd.dmult);
        r.real("fd_step", step);
        for i in 0..jac.dx_dxi.rows() {
            r.reals(&format!("fd.x_{}", i + 1), &[jac.dx_dxi[(i, 0)], fd.dx[(i, 0)]]);
        }
        for i in 0..jac.multiplier_full.rows() {
            r.reals(&format!("fd.mult_{}", i + 1), &[jac.multiplier_full[(i, 0)], fd.dmult[(i, 0)]]);
        }
        passed = dev_x <= FD_REL_TOL && dev_m <= FD_REL_TOL;
        r.real("rel_dev_x", dev_x)
            .real("rel_dev_multipliers", dev_m)
            .text("fd_check", if passed { "PASS" } else { "FAIL" });
    }
    Ok(Output {
        text: r.to_string(),
        passed,
    })
}

/// The Lipschitz bound `ℓ_t` on `t ↦ x*(t)` and the tracking bound `ℓ_t/α`.
pub fn cmd_bounds(p: &Prepared, mode: ConstantsMode) -> Result<Output, CliError> {
    let rep = time_bound(p, mode)?;
    let k = &p.scenario.constants;
    let mut r = Record::new();
    r.text("scenario", p.scenario.name.clone())
        .text("constants", mode.to_string())
        .text("omega_source", p.omega_source)
        .real("ell_t", rep.ell_x)
        .real("ell_t_over_alpha", rep.ell_x / k.alpha);
    r.extend(&bound_record(&rep));
    for (key, v) in [("ell_p", p.ell_p), ("ell_c", k.ell_c), ("ell_v", k.ell_v), ("beta", k.beta)] {
        if r.get(key).is_none() {
            r.real(key, v);
        }
    }
    if r.get("omega").is_none() {
        r.opt_real("omega", k.omega);
    }
    Ok(Output::ok(r.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Runs the scenario's flow, writes `trajectory.csv` and `report.txt` to
/// `out`, and checks the tracking certificate.
pub fn cmd_track(p: &Prepared, mode: ConstantsMode, out: &Path) -> Result<Output, CliError> {
    let bound = time_bound(p, mode)?;
    let ell_t = bound.ell_x;
    log::info!(
        "tracking {} with h = {}, a = {}, bound {}",
        p.scenario.name,
        p.step,
        p.a,
        ell_t / p.a
    );
    let (rec, cert) = run_and_certify(&p.scenario, &p.x0, p.step, p.a, ell_t, &CertifyOptions::default())?;
    if cert.truncated {
        log::warn!("constraint set became empty; run ends at t = {}", cert.feasible_window_end);
    }
    let report = RunReport::from_run(
        &p.scenario.name,
        &mode.to_string(),
        p.step,
        &p.scenario.constants,
        p.ell_p,
        ell_t,
        &rec,
        &cert,
    );
    let text = report.to_record().to_string();

    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &rec).map_err(|e| CliError::Io {
        path: out.join("trajectory.csv").display().to_string(),
        source: std::io::Error::other(e),
    })?;
    write_file(&out.join("trajectory.csv"), &csv)?;
    write_file(&out.join("report.txt"), text.as_bytes())?;
    Ok(Output {
        text,
        passed: cert.passed,
    })
}

/// Runs the named suites (all of them for `all`) and summarizes.
pub fn cmd_verify(suite: &str, seed: u64) -> Result<Output, CliError> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse().map_err(CliError::Usage)?]
    };
    let outcomes = run_suites(&suites, seed);
    let mut text = String::new();
    let mut passed = true;
    for o in &outcomes {
        let mut r = o.record();
        r.text("seed", seed.to_string());
        text.push_str(&r.to_string());
        text.push('\n');
        passed &= o.ok();
    }
    Ok(Output { text, passed })
}
