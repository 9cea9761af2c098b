//! Flat `key=value` text records and the trajectory CSV.
//!
//! Reals are written in Rust's shortest round-trip form, so parsing a
//! record gives back the exact bits.

use std::io::Write;

use thiserror::Error;
use tvopt_core::flows::{TrackingCertificate, TrajectoryRecord};
use tvopt_core::sensitivity::{BoundConstants, LipschitzBoundReport};

pub fn real(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("line {0} is not key=value")]
    Malformed(usize),
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("bad value for `{key}`: {value}")]
    BadValue { key: &'static str, value: String },
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    entries: Vec<(String, String)>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.to_string(), value.into()));
        self
    }

    pub fn real(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, real(value))
    }

    pub fn opt_real(&mut self, key: &str, value: Option<f64>) -> &mut Self {
        self.text(key, value.map_or_else(|| "none".to_string(), real))
    }

    pub fn flag(&mut self, key: &str, value: bool) -> &mut Self {
        self.text(key, value.to_string())
    }

    pub fn reals(&mut self, key: &str, values: &[f64]) -> &mut Self {
        self.text(key, values.iter().map(|v| real(*v)).collect::<Vec<_>>().join(","))
    }

    pub fn extend(&mut self, other: &Record) -> &mut Self {
        self.entries.extend(other.entries.iter().cloned());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ReportError::Malformed(i + 1))?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }

    fn need(&self, key: &'static str) -> Result<&str, ReportError> {
        self.get(key).ok_or(ReportError::Missing(key))
    }

    fn need_real(&self, key: &'static str) -> Result<f64, ReportError> {
        let v = self.need(key)?;
        v.parse().map_err(|_| ReportError::BadValue {
            key,
            value: v.to_string(),
        })
    }

    fn need_opt_real(&self, key: &'static str) -> Result<Option<f64>, ReportError> {
        match self.need(key)? {
            "none" => Ok(None),
            _ => self.need_real(key).map(Some),
        }
    }

    fn need_flag(&self, key: &'static str) -> Result<bool, ReportError> {
        let v = self.need(key)?;
        v.parse().map_err(|_| ReportError::BadValue {
            key,
            value: v.to_string(),
        })
    }
}

impl std::fmt::Display for Record {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn bound_record(rep: &LipschitzBoundReport) -> Record {
    let mut r = Record::new();
    r.text("mode", rep.mode.to_string()).real("ell_x", rep.ell_x).real("ell_lm", rep.ell_lm);
    match &rep.constants {
        BoundConstants::Local {
            lambda_min,
            lambda_max,
            sigma_min_bt,
            lstar_norm,
            gstar_norm,
        } => {
            r.real("lambda_min", *lambda_min)
                .real("lambda_max", *lambda_max)
                .opt_real("sigma_min_bt", *sigma_min_bt)
                .real("lstar_norm", *lstar_norm)
                .real("gstar_norm", *gstar_norm);
        }
        BoundConstants::Global {
            alpha,
            beta,
            zeta,
            ell_g,
            omega,
            lbar,
            gbar,
        } => {
            r.real("alpha", *alpha)
                .real("beta", *beta)
                .reals("zeta", zeta)
                .reals("ell_g", ell_g)
                .opt_real("omega", *omega)
                .real("lbar", *lbar)
                .real("gbar", *gbar);
        }
        BoundConstants::Unconstrained { ell_f, alpha } => {
            r.real("ell_f", *ell_f).real("alpha", *alpha);
        }
        BoundConstants::Linear {
            alpha,
            beta,
            omega,
            ell_v,
        } => {
            r.real("alpha", *alpha)
                .real("beta", *beta)
                .real("omega", *omega)
                .real("ell_v", *ell_v);
        }
        BoundConstants::Composite {
            alpha,
            beta,
            omega,
            ell_c,
            ell_v,
        } => {
            r.real("alpha", *alpha)
                .real("beta", *beta)
                .real("omega", *omega)
                .real("ell_c", *ell_c)
                .real("ell_v", *ell_v);
        }
    }
    r
}

/// Outcome of a tracking run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub constants_mode: String,
    pub step: f64,
    pub bound: f64,
    pub limsup_estimate: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub invariance_ok: bool,
    pub feasible_window_end: f64,
    pub truncated: bool,
    pub max_err: f64,
    pub max_feasibility_violation: f64,
    pub max_monotonicity_excess: f64,
    pub passed: bool,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub ell_t: f64,
    pub ell_p: f64,
    pub ell_c: f64,
    pub ell_v: f64,
    pub omega: Option<f64>,
}

impl RunReport {
    pub fn from_run(
        scenario: &str,
        constants_mode: &str,
        step: f64,
        constants: &tvopt_core::flows::ScenarioConstants,
        ell_p: f64,
        ell_t: f64,
        rec: &TrajectoryRecord,
        cert: &TrackingCertificate,
    ) -> Self {
        Self {
            scenario: scenario.to_string(),
            constants_mode: constants_mode.to_string(),
            step,
            bound: cert.bound,
            limsup_estimate: cert.limsup_estimate,
            window_start: cert.window.0,
            window_end: cert.window.1,
            invariance_ok: cert.invariance_ok,
            feasible_window_end: cert.feasible_window_end,
            truncated: cert.truncated,
            max_err: rec.err.iter().fold(0.0_f64, |a, e| a.max(*e)),
            max_feasibility_violation: rec.max_feasibility_violation(),
            max_monotonicity_excess: rec.max_monotonicity_excess(),
            passed: cert.passed,
            alpha: constants.alpha,
            beta: constants.beta,
            a: cert.a_used,
            ell_t,
            ell_p,
            ell_c: constants.ell_c,
            ell_v: constants.ell_v,
            omega: constants.omega,
        }
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.text("scenario", self.scenario.clone())
            .text("constants", self.constants_mode.clone())
            .real("step", self.step)
            .real("bound", self.bound)
            .real("limsup_estimate", self.limsup_estimate)
            .real("window_start", self.window_start)
            .real("window_end", self.window_end)
            .flag("invariance_ok", self.invariance_ok)
            .real("feasible_window_end", self.feasible_window_end)
            .flag("truncated", self.truncated)
            .real("max_err", self.max_err)
            .real("max_feasibility_violation", self.max_feasibility_violation)
            .real("max_monotonicity_excess", self.max_monotonicity_excess)
            .flag("passed", self.passed)
            .real("alpha", self.alpha)
            .real("beta", self.beta)
            .real("a", self.a)
            .real("ell_t", self.ell_t)
            .real("ell_p", self.ell_p)
            .real("ell_c", self.ell_c)
            .real("ell_v", self.ell_v)
            .opt_real("omega", self.omega);
        r
    }

    pub fn from_record(r: &Record) -> Result<Self, ReportError> {
        Ok(Self {
            scenario: r.need("scenario")?.to_string(),
            constants_mode: r.need("constants")?.to_string(),
            step: r.need_real("step")?,
            bound: r.need_real("bound")?,
            limsup_estimate: r.need_real("limsup_estimate")?,
            window_start: r.need_real("window_start")?,
            window_end: r.need_real("window_end")?,
            invariance_ok: r.need_flag("invariance_ok")?,
            feasible_window_end: r.need_real("feasible_window_end")?,
            truncated: r.need_flag("truncated")?,
            max_err: r.need_real("max_err")?,
            max_feasibility_violation: r.need_real("max_feasibility_violation")?,
            max_monotonicity_excess: r.need_real("max_monotonicity_excess")?,
            passed: r.need_flag("passed")?,
            alpha: r.need_real("alpha")?,
            beta: r.need_real("beta")?,
            a: r.need_real("a")?,
            ell_t: r.need_real("ell_t")?,
            ell_p: r.need_real("ell_p")?,
            ell_c: r.need_real("ell_c")?,
            ell_v: r.need_real("ell_v")?,
            omega: r.need_opt_real("omega")?,
        })
    }
}

/// Writes `t, x_1..x_n, xstar_1..xstar_n, err, feas_viol, monot_lhs`.
/// The last row has an empty `monot_lhs`.
pub fn write_trajectory_csv<W: Write>(out: W, rec: &TrajectoryRecord) -> csv::Result<()> {
    let n = rec.x_alg.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("xstar_{i}")));
    header.extend(["err", "feas_viol", "monot_lhs"].map(String::from));
    w.write_record(&header)?;
    for k in 0..rec.len() {
        let mut row = vec![real(rec.times[k])];
        row.extend(rec.x_alg[k].iter().map(|v| real(*v)));
        row.extend(rec.x_opt[k].iter().map(|v| real(*v)));
        row.push(real(rec.err[k]));
        row.push(real(rec.feasibility_violation[k]));
        row.push(rec.monotonicity_lhs[k].map_or_else(String::new, real));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_real() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(f64::INFINITY), Just(-0.0)]
    }

    proptest! {
        #[test]
        fn run_report_round_trips(
            reals in proptest::collection::vec(any_real(), 17),
            flags in proptest::collection::vec(any::<bool>(), 4),
            omega in proptest::option::of(any_real()),
            name in "[a-z0-9-]{1,12}",
        ) {
            let rep = RunReport {
                scenario: name,
                constants_mode: "paper".into(),
                step: reals[0],
                bound: reals[1],
                limsup_estimate: reals[2],
                window_start: reals[3],
                window_end: reals[4],
                invariance_ok: flags[0],
                feasible_window_end: reals[5],
                truncated: flags[1],
                max_err: reals[6],
                max_feasibility_violation: reals[7],
                max_monotonicity_excess: reals[8],
                passed: flags[2],
                alpha: reals[9],
                beta: reals[10],
                a: reals[11],
                ell_t: reals[12],
                ell_p: reals[13],
                ell_c: reals[14],
                ell_v: reals[15],
                omega,
            };
            let text = rep.to_record().to_string();
            let back = RunReport::from_record(&Record::parse(&text).unwrap()).unwrap();
            prop_assert_eq!(back.to_record().to_string(), text);
            prop_assert_eq!(back.step.to_bits(), rep.step.to_bits());
        }
    }

    #[test]
    fn csv_layout() {
        let rec = TrajectoryRecord {
            times: vec![0.0, 0.5],
            x_alg: vec![vec![1.0], vec![0.75]],
            x_opt: vec![vec![0.0], vec![0.0]],
            err: vec![1.0, 0.75],
            feasibility_violation: vec![0.0, 0.0],
            monotonicity_lhs: vec![Some(-0.5), None],
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &rec).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,x_1,xstar_1,err,feas_viol,monot_lhs\n0.0,1.0,0.0,1.0,0.0,-0.5\n0.5,0.75,0.0,0.75,0.0,\n"
        );
    }
}
