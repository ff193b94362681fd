use std::path::Path;
use std::process::{Command, Output};

use gridform_ssa::fixtures::TOY2X3;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridform-ssa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run cli")
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy2x3.json"), TOY2X3).unwrap();
    dir
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn analyze_writes_modes_with_inter_area_row() {
    let dir = workspace();
    let out = cli(dir.path(), &["--out", "o", "analyze", "toy2x3.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/modes.csv")).unwrap();
    assert!(csv.starts_with("# gridform-ssa "));
    assert!(csv.contains("# case_sha256: "));
    assert!(data_rows(&csv).iter().any(|r| r.contains(",inter-area,")));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/assumptions.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["assumptions"]["pass"], true);
    assert_eq!(json["config"]["command"], "analyze");
}

#[test]
fn missing_case_exits_one_and_names_path() {
    let dir = workspace();
    let out = cli(dir.path(), &["analyze", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn invalid_case_exits_one() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.json"), TOY2X3.replace("\"to\": \"b3\"", "\"to\": \"b99\"")).unwrap();
    let out = cli(dir.path(), &["analyze", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b99"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = workspace();
    let out = cli(dir.path(), &["analyze", "toy2x3.json", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(cli(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn droop_sweep_nine_points_nondecreasing() {
    let dir = workspace();
    let out = cli(
        dir.path(),
        &["--out", "o", "sweep", "toy2x3.json", "--param", "droop", "--from", "0.10", "--to", "0.02", "--points", "9"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/locus.csv")).unwrap();
    let rows = data_rows(&csv);
    for id in ["M4", "M5"] {
        let z: Vec<f64> = rows
            .iter()
            .filter(|r| r.split(',').nth(2) == Some(id))
            .map(|r| r.split(',').nth(6).unwrap().parse().unwrap())
            .collect();
        assert_eq!(z.len(), 9, "{id}");
        assert!(z.windows(2).all(|w| w[1] - w[0] > -1e-3), "{id}: {z:?}");
    }
    assert!(dir.path().join("o/reversal.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workspace();
    let args = ["--out", "o", "sensitivity", "toy2x3.json"];
    assert!(cli(dir.path(), &args).status.success());
    let a = std::fs::read(dir.path().join("o/sensitivity.csv")).unwrap();
    assert!(cli(dir.path(), &args).status.success());
    assert_eq!(a, std::fs::read(dir.path().join("o/sensitivity.csv")).unwrap());
}

#[test]
fn check_design_and_ringdown() {
    let dir = workspace();
    let out = cli(dir.path(), &["--out", "o", "check-design", "toy2x3.json", "--mode", "M4"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("zeta = 0.02498 (2.498%)"), "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/design.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["modes"].as_array().unwrap().len(), 1);

    let out = cli(
        dir.path(),
        &["--out", "o", "ringdown", "toy2x3.json", "--perturb", "dg_G1=1e-3", "--horizon", "5", "--dt", "0.002"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 2501);

    let out = cli(dir.path(), &["ringdown", "toy2x3.json", "--perturb", "nope=1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_band_and_threads_are_validation_errors() {
    let dir = workspace();
    assert_eq!(cli(dir.path(), &["--band", "1.0", "0.5", "analyze", "toy2x3.json"]).status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_gridform-ssa"))
        .current_dir(dir.path())
        .env("GRIDFORM_SSA_THREADS", "zero")
        .args(["analyze", "toy2x3.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let dir = workspace();
    let out = cli(dir.path(), &["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.lines().any(|l| l.starts_with("FAIL")));
}
