//! Exit codes and output files of the `dbar` binary.

use std::path::Path;
use std::process::Command;

fn dbar(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dbar")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = dbar(&["verify-forms"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_and_unknown_fields_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "broken.json", "{\"domain\": ");
    assert_eq!(dbar(&["verify-forms", "-c", &broken]).status.code(), Some(2));

    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{"domain": {"kind": "ball", "radius": 1.0}, "solver": {"bm_pointz": 10}}"#,
    );
    let out = dbar(&["verify-forms", "-c", &unknown]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.bm_pointz"));

    let missing = dir.path().join("absent.json");
    assert_eq!(dbar(&["verify-forms", "-c", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn verify_forms_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ball.json", r#"{"domain": {"kind": "ball", "radius": 1.0}}"#);
    let out_dir = dir.path().join("out");
    let out = dbar(&["verify-forms", "-c", &cfg, "-o", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("verify-forms.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], serde_json::Value::Bool(true));
    assert!(out_dir.join("verify-forms.csv").exists());
}
