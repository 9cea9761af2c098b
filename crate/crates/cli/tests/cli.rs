//! End-to-end behaviour of the `tvopt` binary: records, exit codes, output
//! files and diagnostics.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::{NamedTempFile, TempDir};

fn tvopt(args: &[&str]) -> Output {
    tvopt_env(args, "quiet")
}

fn tvopt_env(args: &[&str], log: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvopt"))
        .args(args)
        .env("TVOPT_LOG", log)
        .output()
        .expect("binary runs")
}

fn config(json: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(json.as_bytes()).unwrap();
    f
}

fn path(f: &NamedTempFile) -> &str {
    f.path().to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of `key=` in a flat record.
fn field(text: &str, key: &str) -> String {
    let prefix = format!("{key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

fn reals(text: &str, key: &str) -> Vec<f64> {
    field(text, key).split(',').map(|s| s.parse().unwrap()).collect()
}

const UNCONSTRAINED: &str = r#"{
    "name": "origin", "kind": "unconstrained", "n": 2,
    "q": [[1, 0], [0, 3]], "target": {"c": ["0", "0"]},
    "horizon": 5, "step": 0.01, "x0": [1, 1]
}"#;

const TRANSLATION: &str = r#"{
    "name": "translation", "kind": "unconstrained", "n": 1,
    "q": [[1]], "target": {"c": ["t"]},
    "horizon": 5, "step": 0.01, "x0": [0]
}"#;

const WEAKLY_ACTIVE: &str = r#"{
    "name": "weak", "kind": "polyhedral-sweeping", "n": 1,
    "q": [[1]], "target": {"c": ["0"]},
    "u": [[1]], "v1": [0], "v2": [0],
    "horizon": 5, "step": 0.01, "x0": [0]
}"#;

const STATIC_BOX: &str = r#"{
    "name": "box", "kind": "polyhedral-sweeping", "n": 2,
    "q": [[1, 0], [0, 2]], "target": {"c": ["0", "0"]},
    "u": [[1, 0], [-1, 0], [0, 1], [0, -1]], "v1": [0, 0, 0, 0], "v2": [1, 1, 1, 1],
    "horizon": 5, "step": 0.01, "x0": [0.5, -0.5]
}"#;

#[test]
fn unconstrained_minimum_at_the_target() {
    let f = config(UNCONSTRAINED);
    let o = tvopt(&["solve", "--config", path(&f), "--t", "0.7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(reals(&text, "x").iter().all(|x| x.abs() <= 1e-12));
    assert_eq!(field(&text, "regular"), "true");
}

#[test]
fn builtin_polyhedral_example_is_regular() {
    let o = tvopt(&["solve", "--builtin", "paper-ex2", "--t", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(field(&text, "regular"), "true");
    assert_eq!(field(&text, "licq"), "true");
}

#[test]
fn infeasible_instance_exits_2() {
    // x ≤ −1 and −x ≤ −1 cannot both hold.
    let f = config(
        r#"{"name": "empty", "kind": "polyhedral-sweeping", "n": 1, "q": [[1]],
            "target": {"c": ["0"]}, "u": [[1], [-1]], "v1": [0, 0], "v2": [-1, -1],
            "horizon": 1, "step": 0.01, "x0": [0]}"#,
    );
    let o = tvopt(&["solve", "--config", path(&f), "--t", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("InfeasibleProblem"), "{}", stderr(&o));
}

#[test]
fn bad_input_exits_3() {
    let dims = config(r#"{"name": "x", "kind": "unconstrained", "n": 2, "q": [[1]], "target": {"c": ["0", "0"]}, "horizon": 1, "step": 0.1, "x0": [0, 0]}"#);
    let expr = config(r#"{"name": "x", "kind": "unconstrained", "n": 1, "q": [[1]], "target": {"c": ["sin("]}, "horizon": 1, "step": 0.1, "x0": [0]}"#);
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", "--config", path(&dims), "--t", "0"],
        vec!["solve", "--config", path(&expr), "--t", "0"],
        vec!["solve", "--config", "/nonexistent/config.json", "--t", "0"],
        vec!["solve", "--builtin", "no-such-example", "--t", "0"],
        vec!["solve", "--t", "0"],
        vec!["track", "--builtin", "paper-ex1", "--step", "-1"],
        vec!["verify", "--suite", "no-such-suite"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let o = tvopt(&args);
        assert_eq!(o.status.code(), Some(3), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn translation_has_unit_derivative() {
    let f = config(TRANSLATION);
    let o = tvopt(&["jacobian", "--config", path(&f), "--t", "2", "--fd-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(field(&text, "path"), "local");
    assert!((reals(&text, "dx_dt")[0] - 1.0).abs() <= 1e-12);
    assert_eq!(field(&text, "fd_check"), "PASS");
}

#[test]
fn weakly_active_point_falls_back_to_the_degenerate_bound() {
    let f = config(WEAKLY_ACTIVE);
    let o = tvopt_env(&["jacobian", "--config", path(&f), "--t", "1"], "warn");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "path"), "degenerate");
    assert!(stderr(&o).contains("strict complementarity"), "{}", stderr(&o));
}

#[test]
fn static_problem_has_zero_bound() {
    let f = config(STATIC_BOX);
    for mode in ["paper", "strict"] {
        let o = tvopt(&["bounds", "--config", path(&f), "--constants", mode]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(reals(&stdout(&o), "ell_t")[0], 0.0, "{mode}");
    }
}

#[test]
fn starting_at_the_optimizer_of_a_static_problem_stays_there() {
    let f = config(STATIC_BOX.replace("[0.5, -0.5]", "[0, 0]").as_str());
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tvopt(&["track", "--config", path(&f), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(reals(&stdout(&o), "max_err")[0] <= 1e-9);
    assert!(dir.path().join("trajectory.csv").is_file());
    assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), stdout(&o));
}

#[test]
fn certificate_failure_exits_1() {
    // Claiming a contraction rate far above the true one makes the bound too
    // tight for the observed error.
    let json = TRANSLATION.replace(r#""x0": [0]"#, r#""x0": [0], "constants": {"a": 1000}"#);
    let f = config(&json);
    let dir = TempDir::new().unwrap();
    let o = tvopt(&["track", "--config", path(&f), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert_eq!(field(&stdout(&o), "passed"), "false");
}

fn last_time(dir: &Path) -> f64 {
    let mut r = csv::Reader::from_path(dir.join("trajectory.csv")).unwrap();
    let last = r.records().last().unwrap().unwrap();
    last[0].parse().unwrap()
}

#[test]
fn horizon_override_shortens_the_run() {
    let dir = TempDir::new().unwrap();
    let o = tvopt(&["track", "--builtin", "paper-ex1", "--horizon", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.code().unwrap() <= 1, "{}", stderr(&o));
    assert!((last_time(dir.path()) - 3.0).abs() <= 1e-9);
}

#[test]
fn info_logging_is_opt_in() {
    let quiet = tvopt_env(&["solve", "--builtin", "paper-ex1", "--t", "0"], "quiet");
    assert!(stderr(&quiet).is_empty(), "{}", stderr(&quiet));
    let loud = tvopt_env(&["solve", "--builtin", "paper-ex1", "--t", "0"], "info");
    assert!(stderr(&loud).contains("solved"), "{}", stderr(&loud));
}

#[test]
fn shipped_example_config_runs() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/drift.json");
    let o = tvopt(&["bounds", "--config", cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(reals(&stdout(&o), "ell_t")[0] > 0.0);
}
