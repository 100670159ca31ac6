use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cyclofield"))
        .arg(command)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

const THEOREM2: &str = r#"{
  "density": "gen(3,0.5,[(1,0.5)],constant(1,2))",
  "kernel": {"kind": "bessel", "n": 3, "a": AAA},
  "r_ladder": [10, 100]
}"#;

#[test]
fn covariance_writes_hashed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        "covariance",
        r#"{"density": "example1(1)", "r_grid": [0, 1, 2]}"#,
        &[],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(tmp.path().join("out/covariance.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config-sha256: "));
    assert_eq!(lines.next().unwrap(), "r,value,error");
    assert_eq!(lines.count(), 3);
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        "covariance",
        r#"{"density": "example1(1)", "r_gird": [1]}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_gird"));
}

#[test]
fn malformed_density_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        "covariance",
        r#"{"density": "example9(1)"}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theorem2_at_a_singular_frequency_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "theorem2", &THEOREM2.replace("AAA", "1"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("singular frequency"));
}

#[test]
fn theorem2_away_from_singularities_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        "theorem2",
        &THEOREM2.replace("AAA", "0.5"),
        &["--threads", "2"],
    );
    // Two rungs are not enough for the full drop, but the run itself succeeds.
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    assert!(tmp.path().join("out/theorem2.csv").exists());
}

#[test]
fn mismatched_command_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), "bfunc", r#"{"command": "lfunc"}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        "bfunc",
        r#"{
          "density": "gen(3,0.5,[(1,0.9)],constant(1,2))",
          "r_grid": [50],
          "quad": {"max_subdivisions": 1, "rel_tol": 1e-15, "abs_tol": 1e-300}
        }"#,
        &[],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bad_thread_count_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("config.json");
    fs::write(&path, r#"{"density": "example1(1)", "r_grid": [1]}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cyclofield"))
        .args(["covariance", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .env("CYCLOFIELD_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
