//! End-to-end checks of the binary: exit codes, outputs and reproducibility.

use std::path::Path;
use std::process::Command;

fn mcdlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mcdlab")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn single_hole_domain_is_a_validation_failure() {
    let dir = scratch("annulus");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("annulus.json");
    std::fs::write(
        &cfg,
        r#"{"domain":{"outer":{"center":0.0,"radius":1.0},"holes":[{"center":0.5,"radius":0.15}]}}"#,
    )
    .unwrap();
    let out = mcdlab(&["--config", cfg.to_str().unwrap(), "domain"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("two holes"));
}

#[test]
fn bad_tolerance_and_unknown_command_are_validation_failures() {
    assert_eq!(mcdlab(&["--tol=-1", "domain"]).status.code(), Some(2));
    assert_eq!(mcdlab(&["--tol=0", "domain"]).status.code(), Some(2));
    assert_eq!(mcdlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn domain_stage_prints_json() {
    let out = mcdlab(&["domain"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["domain"]["n"], 2);
    assert_eq!(v["stages"], serde_json::json!(["domain"]));
}

#[test]
fn pipeline_outputs_are_reproducible() {
    let (a, b) = (scratch("run_a"), scratch("run_b"));
    for dir in [&a, &b] {
        let out = mcdlab(&["pipeline", "--out", dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["summary.json", "bisection.csv", "psi_boundary.csv", "domain.svg", "bisection.svg"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file} differs");
    }
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    let verdict = &v["verdict"];
    assert_eq!(verdict["szs"], "pass");
    assert_eq!(verdict["eps"], "pass");
    assert_eq!(verdict["diag"], "witness");
    assert_eq!(verdict["rho_upper_below_one"], true);
}

#[test]
fn cone_rho_reports_bracket() {
    let out = mcdlab(&["cone", "rho", "--f", "psi-p", "--grid", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["grid"], 4);
    assert!(v["rho_lower"].as_f64().unwrap() >= 0.995);
    assert!(v["residual_trace"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn module_subcommands_emit_csv_and_json() {
    let out = mcdlab(&["harmonic", "qfuncs", "--index", "2", "--grid", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("curve,angle,value"));
    assert_eq!(lines.count(), 24);
    // Q_2 is positive exactly on its own curve
    for row in text.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let v: f64 = cols[2].parse().unwrap();
        assert_eq!(v > 0.0, cols[0] == "2", "{row}");
    }
    assert_eq!(mcdlab(&["harmonic", "solve", "--index", "7"]).status.code(), Some(2));

    let out = mcdlab(&["testfn", "build", "--p", "3.14159,0.4,-2.2", "--b", "-0.1", "--out", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["winding"], 3);
    assert!(v["unimodularity"].as_f64().unwrap() < 1e-6);
    assert_eq!(mcdlab(&["testfn", "build", "--p", "1,2"]).status.code(), Some(2));

    let out = mcdlab(&["jacobian", "omega", "--tol", "1e-8"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["min_eig_im"].as_f64().unwrap() > 0.0);
}
