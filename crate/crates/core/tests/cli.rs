use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use apfx::pathspace::{read_binary, TimeGrid};

fn apfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apfx")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    apfx(&args)
}

fn write_config(dir: &Path, name: &str, problem: &str, levels: &str, diagnostics: &str) -> PathBuf {
    let text = format!(
        r#"{{
  "grid": {{"a": 0.0, "b": 1.0, "N": 16}},
  "monte_carlo": {{"M": 64, "seed": 3}},
  "problem": {problem},
  "scheme": {{"levels": {levels}, "box_rule": {{"kind": "growing", "radius0": 4.0}}}},
  "diagnostics": {diagnostics},
  "localization": {{"radii": [0.5, 1.0]}}
}}"#
    );
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const GBM: &str = r#"{"preset": "gbm", "mu": 0.05, "sigma": 0.2, "x0": 1.0}"#;
const SMALL_DIAG: &str = r#"{
    "tightness": {"box_lo": -1.0, "box_hi": 1.0, "deltas": [0.125, 0.25], "pair_count": 8,
                  "quantile": 0.99, "sigma": 0.05, "rho_values": [0.2, 0.1], "trials": 2},
    "check": {"locality_trials": 10, "adaptedness_trials": 1}
}"#;

fn diag_with_operator(op: &str) -> String {
    SMALL_DIAG.replacen('{', &format!("{{\n    \"operator\": {op},"), 1)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn zero_coefficient_gbm_keeps_the_initial_value() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = r#"{"preset": "gbm", "mu": 0.0, "sigma": 0.0, "x0": 1.5}"#;
    let cfg = write_config(tmp.path(), "c.json", problem, "[4, 16]", SMALL_DIAG);
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["levels.csv", "pairwise.csv", "summary.csv", "solution.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("node,time,coord,mean,"));
    for line in summary.lines().skip(1) {
        let mean: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(mean, 1.5);
    }
    let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let x = read_binary(fs::File::open(out.join("solution.bin")).unwrap(), grid).unwrap();
    assert_eq!(x.scenarios(), 64);
    assert!(x.values().iter().all(|&v| v == 1.5));
}

#[test]
fn divisibility_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", GBM, "[3, 16]", SMALL_DIAG);
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("does not divide"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn malformed_and_missing_configs_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ \"grid\": ").unwrap();
    assert_eq!(code(&run("solve", &bad, &tmp.path().join("o"), &[])), 1);
    let unknown = write_config(tmp.path(), "u.json", GBM, "[16]", r#"{"batery_count": 3}"#);
    assert_eq!(code(&run("scheme", &unknown, &tmp.path().join("o"), &[])), 1);
    let cfg = write_config(tmp.path(), "c.json", GBM, "[16]", SMALL_DIAG);
    assert_eq!(code(&run("solve", &cfg, &tmp.path().join("o"), &["--threads", "0"])), 1);
    assert_eq!(code(&apfx(&["solve"])), 1);
    assert_eq!(code(&apfx(&["solve", "--config", "/nonexistent/apfx.json"])), 1);
    assert_eq!(code(&apfx(&["--help"])), 0);
}

#[test]
fn check_op_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ito = write_config(tmp.path(), "ito.json", GBM, "[16]", &diag_with_operator(r#"{"kind": "ito"}"#));
    let o = run("check-op", &ito, &tmp.path().join("ito"), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let loc = fs::read_to_string(tmp.path().join("ito/locality.csv")).unwrap();
    assert_eq!(loc.lines().nth(1).unwrap(), "10,10,0,,,");
    let adapted = fs::read_to_string(tmp.path().join("ito/adaptedness.csv")).unwrap();
    assert_eq!(adapted.lines().count(), 1 + 17);

    let shift = write_config(
        tmp.path(),
        "shift.json",
        GBM,
        "[16]",
        &diag_with_operator(r#"{"kind": "nonlocal_shift"}"#),
    );
    let o = run("check-op", &shift, &tmp.path().join("shift"), &[]);
    assert_eq!(code(&o), 3);
    let loc = fs::read_to_string(tmp.path().join("shift/locality.csv")).unwrap();
    let fields: Vec<&str> = loc.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[2], "10");
    assert!(fields[5].parse::<usize>().is_ok(), "counterexample node recorded");

    let anticipating = write_config(
        tmp.path(),
        "ant.json",
        GBM,
        "[16]",
        &diag_with_operator(r#"{"kind": "anticipating"}"#),
    );
    assert_eq!(code(&run("check-op", &anticipating, &tmp.path().join("ant"), &[])), 3);

    let malformed = write_config(
        tmp.path(),
        "mal.json",
        GBM,
        "[16]",
        &diag_with_operator(r#"{"kind": "ito", "colum": 0}"#),
    );
    assert_eq!(code(&run("check-op", &malformed, &tmp.path().join("mal"), &[])), 1);
}

#[test]
fn tightness_on_a_constant_operator_records_a_degenerate_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        GBM,
        "[16]",
        &diag_with_operator(r#"{"kind": "constant", "value": [0.5]}"#),
    );
    let out = tmp.path().join("out");
    let o = run("tightness", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["modulus.csv", "regularity.csv", "tightness.csv", "continuity.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let reg = fs::read_to_string(out.join("regularity.csv")).unwrap();
    assert!(reg.contains("# degenerate,true"), "{reg}");

    let empty = write_config(tmp.path(), "e.json", GBM, "[]", SMALL_DIAG);
    assert_eq!(code(&run("tightness", &empty, &tmp.path().join("e"), &[])), 1);
}

#[test]
fn ito_tightness_exceedance_is_small() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", GBM, "[16]", &diag_with_operator(r#"{"kind": "ito"}"#));
    let out = tmp.path().join("out");
    assert_eq!(code(&run("tightness", &cfg, &out, &["--seed", "77"])), 0);
    let t = fs::read_to_string(out.join("tightness.csv")).unwrap();
    let exceedance: f64 = t.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(exceedance < 0.05, "{t}");
}

#[test]
fn scheme_and_localize_write_their_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", GBM, "[4, 8, 16]", SMALL_DIAG);
    let out = tmp.path().join("scheme");
    let o = run("scheme", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "alpha_n4.bin",
        "alpha_n16.bin",
        "levels.csv",
        "pairwise.csv",
        "narrow.csv",
        "settling.csv",
        "strong_limit.csv",
        "residuals.csv",
        "summary.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let levels = fs::read_to_string(out.join("levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 4);

    let out = tmp.path().join("loc");
    assert_eq!(code(&run("localize", &cfg, &out, &[])), 0);
    let stopping = fs::read_to_string(out.join("stopping.csv")).unwrap();
    assert_eq!(stopping.lines().count(), 65);
    let ladder = fs::read_to_string(out.join("ladder.csv")).unwrap();
    assert_eq!(ladder.lines().count(), 3);
}

#[test]
fn seed_override_changes_results_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", GBM, "[16]", SMALL_DIAG);
    let read = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        assert_eq!(code(&run("solve", &cfg, &out, &["--seed", seed])), 0);
        fs::read(out.join("solution.bin")).unwrap()
    };
    assert_eq!(read("a", "5"), read("b", "5"));
    assert_ne!(read("a", "5"), read("c", "6"));
}

#[test]
fn operator_problem_that_is_only_causal_uses_picard() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = r#"{
      "operator": {"kind": "sum", "parts": [
        {"kind": "constant", "value": [1.0]},
        {"kind": "superposition", "coefficient": {"fn": "linear", "scale": 0.5, "offset": 0.0}}
      ]},
      "x0": [0.0]
    }"#;
    let cfg = write_config(tmp.path(), "c.json", problem, "[16]", SMALL_DIAG);
    assert_eq!(code(&run("solve", &cfg, &tmp.path().join("x"), &[])), 1);
    let text = fs::read_to_string(&cfg).unwrap().replace(",\n  \"localization\": {\"radii\": [0.5, 1.0]}", "");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let levels = fs::read_to_string(out.join("levels.csv")).unwrap();
    assert!(levels.lines().nth(1).unwrap().ends_with(",picard"), "{levels}");

    // No localization section.
    assert_eq!(code(&run("localize", &cfg, &tmp.path().join("l"), &[])), 1);
}
