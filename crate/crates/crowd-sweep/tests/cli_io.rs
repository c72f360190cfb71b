//! End-to-end runs of the command-line binary against the bundled
//! scenario files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crowd_sweep::optimality::VerificationReport;
use crowd_sweep::two_body::{analytic_trajectory, Branch, TwoBodySolution};
use crowd_sweep::Scenario;
use nalgebra::Vector2;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crowd-sweep"))
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn solve2_verify_roundtrip_on_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["ex1.json", "ex2.json", "ex3.json"] {
        let scenario = scenario_path(name);
        let sol_path = dir.path().join(format!("sol_{name}"));
        let out = run(&[
            "solve2",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            sol_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "solve2 failed: {}", String::from_utf8_lossy(&out.stderr));

        let sol = TwoBodySolution::from_json(&std::fs::read_to_string(&sol_path).unwrap()).unwrap();
        assert_eq!(sol.branch, Branch::ContactPositiveEta);

        let report_path = dir.path().join(format!("report_{name}"));
        let out = run(&[
            "verify",
            "--scenario",
            scenario.to_str().unwrap(),
            "--solution",
            sol_path.to_str().unwrap(),
            "--tol",
            "1e-6",
            "--out",
            report_path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "verify: {}", String::from_utf8_lossy(&out.stderr));
        let report =
            VerificationReport::from_json(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
        assert!(report.overall);
        assert_eq!(report.conditions.len(), 10);
    }
}

#[test]
fn solve2_reports_reference_cost_for_initial_contact_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let sol_path = dir.path().join("sol.json");
    let out = run(&[
        "solve2",
        "--scenario",
        scenario_path("ex1.json").to_str().unwrap(),
        "--out",
        sol_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let sol = TwoBodySolution::from_json(&std::fs::read_to_string(&sol_path).unwrap()).unwrap();
    assert!((sol.j - 45.9).abs() < 0.2, "J = {}", sol.j);
    assert_eq!(sol.t12, Some(0.0));
}

#[test]
fn verify_rejects_perturbed_solution_with_exit_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let sc_path = scenario_path("ex1.json");
    let sc = Scenario::from_json(&std::fs::read_to_string(&sc_path).unwrap()).unwrap();

    // consistent but non-stationary controls
    let (a1, a2) = (3.6, 1.5);
    let eta = (6.0 * a1 - 3.0 * a2) / 2.0;
    let e = Vector2::new(2.0_f64.sqrt() / 2.0, -(2.0_f64.sqrt()) / 2.0);
    let segments = analytic_trajectory(&sc, a1, a2, Some(0.0), eta, e).unwrap();
    let bogus = TwoBodySolution {
        branch: Branch::ContactPositiveEta,
        a: [a1, a2],
        t12: Some(0.0),
        eta12: eta,
        theta21: 7.0 * std::f64::consts::FRAC_PI_4,
        j: 0.0,
        segments,
    };
    let sol_path = dir.path().join("bogus.json");
    std::fs::write(&sol_path, bogus.to_json().unwrap()).unwrap();

    let report_path = dir.path().join("report.json");
    let out = run(&[
        "verify",
        "--scenario",
        sc_path.to_str().unwrap(),
        "--solution",
        sol_path.to_str().unwrap(),
        "--tol",
        "1e-6",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report =
        VerificationReport::from_json(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(!report.overall);
}

#[test]
fn simulate_zero_controls_writes_constant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("traj.csv");
    let out = run(&[
        "simulate",
        "--scenario",
        scenario_path("ex2.json").to_str().unwrap(),
        "--a",
        "0,0",
        "--steps",
        "50",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1_1,x1_2,x2_1,x2_2,eta_1_2");
    assert_eq!(lines.len(), 52);
    let first: Vec<&str> = lines[1].splitn(2, ',').collect();
    let last: Vec<&str> = lines[51].splitn(2, ',').collect();
    assert_eq!(first[1], last[1], "state columns should not move");
}

#[test]
fn simulate_frozen_flag_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("traj.csv");
    let out = run(&[
        "simulate",
        "--scenario",
        scenario_path("ex2.json").to_str().unwrap(),
        "--a",
        "3.36,1.68",
        "--steps",
        "100",
        "--frozen-angles",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1 contact events"), "stdout: {stdout}");
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--scenario",
        scenario_path("ex1.json").to_str().unwrap(),
        "--grid",
        "0:4:1",
        "--steps",
        "200",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "a1,a2,J");
    assert_eq!(lines.len(), 26);
    assert!(String::from_utf8_lossy(&out.stdout).contains("best J"));
}

#[test]
fn constants_subcommand_prints_diagnostics() {
    let out = run(&["constants", "--n", "3", "--R", "3"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("M1 = 1.4142135623730951"));
    assert!(stdout.contains("beta = 529.089"), "stdout: {stdout}");

    let out = run(&["constants", "--n", "2", "--R", "3"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("beta = undefined"));
}

#[test]
fn usage_errors_exit_2_with_distinct_messages() {
    // malformed scenario JSON
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run(&["solve2", "--scenario", bad.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));

    // infeasible initial configuration
    let overlapping = dir.path().join("overlap.json");
    std::fs::write(
        &overlapping,
        r#"{"T": 6.0, "R": 3.0,
            "participants": [
                {"x0": [-1.0, 0.0], "speed": 1.0},
                {"x0": [1.0, 0.0], "speed": 1.0}
            ],
            "control_bounds": [0.0, 10.0]}"#,
    )
    .unwrap();
    let out = run(&["solve2", "--scenario", overlapping.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlapping"));

    // three participants passed to the two-participant solver
    let three = dir.path().join("three.json");
    std::fs::write(
        &three,
        r#"{"T": 6.0, "R": 1.0,
            "participants": [
                {"x0": [-20.0, 0.0], "speed": 1.0},
                {"x0": [20.0, 0.0], "speed": 1.0},
                {"x0": [0.0, 20.0], "speed": 1.0}
            ],
            "control_bounds": [0.0, 10.0]}"#,
    )
    .unwrap();
    let out = run(&["solve2", "--scenario", three.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n = 2"));

    // unknown subcommand
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}
