use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_varifold-decay"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn derive_prints_manifest() {
    let o = run(&["derive"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["body"]["data"]["derived"]["a"], 2.5);
    assert_eq!(v["body"]["data"]["derived"]["b"], 1.0);
    assert!(stderr(&o).contains("a = 2.5"));
}

#[test]
fn scaling_mass_passes_with_csv() {
    let o = run(&["report-scaling", "--kind", "mass", "--i-min", "2", "--i-max", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(csv.starts_with("i,radius,lower,upper,log2_lower,log2_upper\n"));
    assert_eq!(csv.lines().count(), 8);
    assert!(stderr(&o).contains("verdict = PASS"));
}

#[test]
fn verdict_failure_exits_one() {
    let o = run(&["report-scaling", "--kind", "mass", "--geometry", "ball", "--tolerance", "1e-4"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("verdict = FAIL"));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.json", "{\n  \"seed\": 3,\n  \"i_min\": ]\n}\n");
    let o = run(&["derive", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("column"), "{err}");
}

#[test]
fn unknown_field_and_subcommand_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "extra.json", r#"{"example": {"n": 2, "alpha": 1}}"#);
    assert_eq!(run(&["derive", "--config", &path]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn threshold_violation_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "kappa2.json",
        r#"{"example": {"n": 2, "p": 1, "alpha1": 1, "alpha2": 1, "q1": 3, "q2": 2}}"#,
    );
    let o = run(&["derive", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threshold"), "{}", stderr(&o));
}

#[test]
fn reports_are_deterministic_and_seed_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "iso.json",
        r#"{"iso": {"oracle_samples": 50000, "grid_points": 6}}"#,
    );
    let outs: Vec<Vec<u8>> = ["a.json", "b.json"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = run(&[
                "report-iso",
                "--config",
                &cfg,
                "--seed",
                "42",
                "--format",
                "json",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            assert!(stderr(&o).contains("seed = 42"));
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    let v: serde_json::Value = serde_json::from_slice(&outs[0]).unwrap();
    assert_eq!(v["provenance"]["seed"], 42);
}

#[test]
fn dichotomy_and_scan_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.json",
        r#"{"example": {"n": 2, "p": 1, "alpha1": 1, "alpha2": 1, "q1": 3, "q2": 2.25}}"#,
    );
    for q in ["2.125", "2.375", "1.875"] {
        let o = run(&["dichotomy", "--config", &cfg, "--q", q]);
        assert_eq!(o.status.code(), Some(0), "q = {q}: {}", stderr(&o));
    }
    let o = run(&["scan-excess", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn thread_variable_is_validated() {
    let ok = bin().env("VARIFOLD_THREADS", "1").arg("derive").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = bin().env("VARIFOLD_THREADS", "many").arg("derive").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let zero = bin().env("VARIFOLD_THREADS", "0").arg("derive").output().unwrap();
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn unwritable_output_names_path() {
    let o = run(&["derive", "--out", "/nonexistent/dir/m.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/dir/m.json"));
}
