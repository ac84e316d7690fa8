//! End-to-end checks of the command-line interface: pipeline wiring,
//! determinism, exit codes and the file formats.

use std::path::Path;
use std::process::{Command, Output};

fn trisphere_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trisphere"))
}

fn run(args: &[&str]) -> Output {
    trisphere_cmd().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn barrier_table_has_normalized_endpoints() {
    let out = run(&["barrier", "--k", "2", "--n", "2", "--p", "2", "--r", "1", "--R", "2", "--samples", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.trim().lines().collect();
    assert_eq!(rows[0], "t,u0");
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[1], "1,0");
    assert_eq!(rows[5], "2,1");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"p": 3.0, "samples": 3, "r": 1.0, "R": 2.0, "k": 2, "n": 2}"#).unwrap();
    let out = run(&["barrier", "--config", cfg.to_str().unwrap(), "--samples", "5"]);
    assert!(out.status.success());
    let rows: Vec<String> = stdout(&out).trim().lines().map(String::from).collect();
    assert_eq!(rows.len(), 6, "flag --samples 5 must win over the config's 3");
}

#[test]
fn invalid_config_exits_two_with_error_json() {
    let out = run(&["barrier", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(err.trim()).expect("stderr is JSON");
    assert_eq!(parsed["kind"], "config");
    assert!(parsed["error"].as_str().unwrap().contains("p"));
}

fn solve_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "solve",
        "--out-dir",
        dir.to_str().unwrap(),
        "--n",
        "2",
        "--k",
        "2",
        "--alpha",
        "1",
        "--beta",
        "2",
        "--cells",
        "48",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn solve_verify_pipeline_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve_into(dir.path(), &["--p", "2", "--boundary", "perturbed-barrier:0.25,2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["field.bin", "field.json", "report.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }

    let verify = run(&[
        "verify",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--field",
        dir.path().join("field.bin").to_str().unwrap(),
        "--radii",
        "12",
    ]);
    assert!(verify.status.success(), "{}", String::from_utf8_lossy(&verify.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bound_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13); // header + 12 radii
    assert!(dir.path().join("bound_report.json").exists());

    // push a bump above the bound and watch the verdict flip
    let bin = dir.path().join("field.bin");
    let side = dir.path().join("field.json");
    let (mut field, meta) = trisphere::io::read_field(&bin, &side).unwrap();
    let grid = field.grid.clone();
    for (idx, v) in field.values.iter_mut().enumerate() {
        let pos = grid.spec.position(idx);
        let d = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
        if (d - 1.5).abs() < 0.08 {
            *v += 0.2;
        }
    }
    trisphere::io::write_field(&bin, &side, &field, &meta).unwrap();
    let verify = run(&[
        "verify",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--field",
        bin.to_str().unwrap(),
        "--radii",
        "12",
    ]);
    assert_eq!(verify.status.code(), Some(1), "tampered field must fail");
}

#[test]
fn identical_runs_are_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let out = solve_into(d.path(), &["--p", "3", "--boundary", "barrier"]);
        assert!(out.status.success());
    }
    for name in ["field.bin", "field.json", "report.json"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = trisphere_cmd()
        .env("TRISPHERE_OUT_DIR", dir.path())
        .args(["solve", "--p", "2", "--cells", "32", "--boundary", "constant:0.5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("field.bin").exists());
}

#[test]
fn study_error_column_decreases() {
    let out = run(&["study", "--p", "2", "--k", "2", "--n", "2", "--cells", "16,32,64"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let errors: Vec<f64> = text
        .trim()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errors.len(), 3);
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn inequality_scan_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "inequality-scan",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--samples",
        "2000",
        "--p-min",
        "1.05",
        "--p-max",
        "9.5",
        "--seed",
        "7",
        "--out",
        "scan.csv",
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(csv.starts_with("inequality,"));
    assert_eq!(csv.trim().lines().count(), 7); // header + 6 inequalities
}

#[test]
fn hadamard_monomial_passes() {
    let out = run(&["hadamard", "--coeffs", "0,0;0,0;1,0", "--r1", "0.5", "--r2", "1", "--r3", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(parsed["pass"], true);
    assert!(parsed["log_gap"].as_f64().unwrap().abs() < 1e-12);
}
