//! End-to-end tests of the `hopfmin` binary: pipelines, exit codes,
//! round-trips, and determinism across thread counts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hopfmin"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hopfmin")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout JSON")
}

fn tmpdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sigma_prints_the_collar_radius() {
    let out = run(&["sigma", "--r", "1", "--R", "4", "--rstar", "1", "--Rstar", "1.25"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "sigma = 2");

    let none = run(&["sigma", "--r", "1", "--R", "2", "--rstar", "1", "--Rstar", "1.25"]);
    assert!(String::from_utf8_lossy(&none.stdout).contains("none"));
}

#[test]
fn usage_errors_exit_1() {
    let out = run(&["modulus", "--domain", "pretzel:3"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["solve", "--source", "washer:2", "--target", "annulus:1,2", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["definitely-not-a-subcommand"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ref_energy_hopf_pipeline() {
    let dir = tmpdir();
    let sol = dir.path().join("nitsche.json");
    let out = run(&[
        "ref",
        "nitsche",
        "--params",
        "1,1",
        "--annulus",
        "1,2",
        "--nr",
        "33",
        "--ntheta",
        "128",
        "--out",
        path_str(&sol),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("nitsche.json.manifest.json").exists());

    let energy = stdout_json(&run(&["energy", path_str(&sol)]));
    let total = energy["total"].as_f64().unwrap();
    let expect = 1.875 * std::f64::consts::PI;
    assert!((total - expect).abs() / expect < 1e-2, "total = {total}");

    let report = stdout_json(&run(&["hopf-check", path_str(&sol)]));
    assert_eq!(report["verdict"], "certified_minimal");
    let c = report["c"].as_f64().unwrap();
    assert!((c + 0.25).abs() < 0.25 * 2e-2, "c = {c}");
}

#[test]
fn energy_report_roundtrips_bit_identically() {
    let dir = tmpdir();
    let sol = dir.path().join("f.json");
    assert!(run(&["ref", "logmap", "--params", "2", "--annulus", "1,1.5", "--nr", "17", "--ntheta", "64", "--out", path_str(&sol)])
        .status
        .success());
    let first = run(&["energy", path_str(&sol)]);
    let second = run(&["energy", path_str(&sol)]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn solve_outputs_are_thread_count_invariant() {
    let dir = tmpdir();
    let sol1 = dir.path().join("a.json");
    let sol2 = dir.path().join("b.json");
    let common = ["solve", "--source", "annulus:1,2", "--target", "annulus:1,1.25", "--nr", "9", "--ntheta", "32", "--seed", "7"];
    let mut args1: Vec<&str> = common.to_vec();
    args1.extend(["--threads", "1", "--out", path_str(&sol1)]);
    let mut args2: Vec<&str> = common.to_vec();
    args2.extend(["--threads", "4", "--out", path_str(&sol2)]);
    let o1 = run(&args1);
    let o2 = run(&args2);
    assert!(o1.status.success(), "stderr: {}", String::from_utf8_lossy(&o1.stderr));
    assert!(o2.status.success());
    let b1 = std::fs::read(&sol1).unwrap();
    let b2 = std::fs::read(&sol2).unwrap();
    assert_eq!(b1, b2, "solution files differ across thread counts");
}

#[test]
fn nonconverged_solve_exits_2_with_partial_output() {
    let dir = tmpdir();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_outer_iters": 1}"#).unwrap();
    let sol = dir.path().join("partial.json");
    let out = run(&[
        "solve",
        "--source",
        "annulus:1,4",
        "--target",
        "annulus:1,1.25",
        "--nr",
        "9",
        "--ntheta",
        "32",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&sol),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(body["converged"], serde_json::Value::Bool(false));
}

#[test]
fn cracks_and_bounds_reports() {
    let dir = tmpdir();
    let sol = dir.path().join("ck.json");
    assert!(run(&[
        "ref",
        "cracked-nitsche",
        "--params",
        "1,2,1",
        "--annulus",
        "1,4",
        "--nr",
        "33",
        "--ntheta",
        "64",
        "--out",
        path_str(&sol)
    ])
    .status
    .success());
    let report = stdout_json(&run(&["cracks", path_str(&sol)]));
    assert_eq!(report["crosscut_detected"], serde_json::Value::Bool(false));
    assert_eq!(report["middle_region_ok"], serde_json::Value::Bool(true));
    assert!(report["inner_cracks"].as_array().unwrap().len() == 1);

    let ray_csv = dir.path().join("rays.csv");
    let crk = dir.path().join("cracks.json");
    assert!(run(&["cracks", path_str(&sol), "--out", path_str(&crk), "--ray-csv", path_str(&ray_csv)]).status.success());
    let csv = std::fs::read_to_string(&ray_csv).unwrap();
    assert!(csv.starts_with("theta,r_theta,R_theta"));
    assert_eq!(csv.lines().count(), 65);

    let bounds = stdout_json(&run(&["bounds", path_str(&sol)]));
    assert!(bounds["lemKn_lhs"].as_f64().is_some());
    assert!(bounds["area_rhs"].as_f64().unwrap() > 0.0);
}

#[test]
fn identity_check_of_a_field_with_itself_is_zero() {
    let dir = tmpdir();
    let sol = dir.path().join("h.json");
    assert!(run(&["ref", "nitsche", "--params", "1,1", "--annulus", "1,2", "--nr", "9", "--ntheta", "32", "--out", path_str(&sol)])
        .status
        .success());
    let gap = stdout_json(&run(&["identity-check", path_str(&sol), path_str(&sol)]));
    assert!(gap["lhs"].as_f64().unwrap().abs() < 1e-12);
    assert!(gap["rhs"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn modulus_command_matches_the_log_ratio() {
    let out = stdout_json(&run(&["modulus", "--domain", "annulus:1,2.718281828459045", "--nr", "33", "--ntheta", "128"]));
    let m = out["mod"].as_f64().unwrap();
    assert!((m - 1.0).abs() < 5e-3, "mod = {m}");
}

#[test]
fn trace_writes_plot_ready_csv() {
    let dir = tmpdir();
    let csv: PathBuf = dir.path().join("traj.csv");
    let out = run(&[
        "trace",
        "--phi",
        "laurent:-2:1.0,0.0",
        "--from",
        "1.5,0",
        "--kind",
        "vertical",
        "--annulus",
        "1,2",
        "--out",
        path_str(&csv),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("x,y,s"));
    assert!(body.lines().count() > 100);
    // Closed circle: all radii near 1.5.
    for line in body.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let r = (cols[0] * cols[0] + cols[1] * cols[1]).sqrt();
        assert!((r - 1.5).abs() < 1e-5);
    }
}
