//! End-to-end tests of the command-line interface: exit codes, output
//! files, and run-to-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_lcvx")
}

fn bundled_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/double_integrator.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary()).args(args).output().expect("spawn lcvx")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("read json")).expect("parse json")
}

#[test]
fn discretize_writes_hold_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("disc");
    let output = run(&[
        "discretize",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0);

    let doc = read_json(&out.join("discretization.json"));
    let dt = 0.25;
    let b0 = doc["b0"].as_array().unwrap();
    assert_eq!(b0.len(), 6);
    let b0_00 = b0[0][0].as_f64().unwrap();
    assert!((b0_00 - dt * dt / 3.0).abs() < 1e-9);
    let b1_00 = doc["b1"][0][0].as_f64().unwrap();
    assert!((b1_00 - dt * dt / 6.0).abs() < 1e-9);
    let zoh_b_00 = doc["zoh_b"][0][0].as_f64().unwrap();
    assert!((zoh_b_00 - dt * dt / 2.0).abs() < 1e-9);
    assert!((doc["a"][0][3].as_f64().unwrap() - dt).abs() < 1e-9);
}

#[test]
fn search_on_bundled_config_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("search");
    let output = run(&[
        "search",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let report = read_json(&out.join("report.json"));
    let rho = report["converged_rho"].as_f64().unwrap();
    assert!((rho - 4.098).abs() <= 0.05, "converged at {rho}");
    assert!(report["solver_calls"].as_u64().unwrap() <= 39);
    assert_eq!(report["seed"].as_u64().unwrap(), 0);
    assert!(out.join("trace.json").exists());
    assert!(out.join("trajectory.csv").exists());
    assert!(out.join("controls.csv").exists());
}

#[test]
fn search_reports_are_deterministic_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let output = run(&[
            "search",
            "--config",
            bundled_config().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
        ]);
        assert_eq!(exit_code(&output), 0);
        let mut report = read_json(&out.join("report.json"));
        report.as_object_mut().unwrap().remove("timestamp_unix");
        reports.push(serde_json::to_string(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn wide_eps_skips_the_search_loop() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("wide");
    let output = run(&[
        "search",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--eps",
        "10",
    ]);
    assert_eq!(exit_code(&output), 0);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["solver_calls"].as_u64().unwrap(), 1);
}

#[test]
fn inverted_bounds_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bundled_config()).unwrap()).unwrap();
    cfg["bounds"]["rho_min"] = serde_json::json!(6.0);
    cfg["bounds"]["rho_max"] = serde_json::json!(4.0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&cfg).unwrap()).unwrap();

    let out = dir.path().join("out");
    let output = run(&[
        "search",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = dir.path().join("out");
    let output = run(&[
        "discretize",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
    assert!(!out.exists());
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // A file where a directory is required makes every write fail.
    let blocker = dir.path().join("blocked");
    std::fs::write(&blocker, "file").unwrap();
    let out = blocker.join("sub");
    let output = run(&[
        "discretize",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 3);
}

#[test]
fn sweep_grid_rows_match_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let output = run(&[
        "sweep",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "4:6:0.1",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 21, "header plus 20 grid rows");
    assert_eq!(rows[0], "rho_eff,classification,cost");
    assert!(rows[1].starts_with("4,"));
}

#[test]
fn sweep_below_rho_min_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let output = run(&[
        "sweep",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "3:6:0.5",
    ]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn certify_accepts_hand_built_solution_on_the_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let u: Vec<Vec<f64>> = (0..17).map(|_| vec![5.0, 0.0, 0.0]).collect();
    let solution = serde_json::json!({
        "x": (0..17).map(|_| vec![0.0; 6]).collect::<Vec<_>>(),
        "u": u,
        "sigma": vec![5.0; 17],
        "eta": (0..16).map(|_| vec![0.0; 6]).collect::<Vec<_>>(),
        "mu1": vec![0.0; 6],
        "mu2": Vec::<f64>::new(),
        "cost": 100.0,
        "status": "optimal",
        "duality_gap": 0.0,
        "terminal_weight": 100.0,
        "solver_iterations": 0,
        "raw_status": "HandBuilt"
    });
    let sol_path = dir.path().join("solution.json");
    std::fs::write(&sol_path, serde_json::to_string(&solution).unwrap()).unwrap();

    let report_path = dir.path().join("report.json");
    let output = run(&[
        "certify",
        "--config",
        bundled_config().to_str().unwrap(),
        "--solution",
        sol_path.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(&report_path);
    assert_eq!(report["vertex_violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["edge_violations"].as_array().unwrap().len(), 0);
}

#[test]
fn solve_zoh_emits_one_control_per_segment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zoh");
    let output = run(&[
        "solve",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--zoh",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(out.join("controls.csv")).unwrap();
    assert_eq!(text.lines().count(), 17, "header plus 16 controls");
}

#[test]
fn solve_debug_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve");
    let dump = dir.path().join("dump.json");
    let output = run(&[
        "solve",
        "--config",
        bundled_config().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--rho-eff",
        "4.5",
        "--debug-dump",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let doc = read_json(&dump);
    assert_eq!(doc["program"]["meta"]["primary_variables"].as_u64(), Some(170));
    assert_eq!(doc["solution"]["status"].as_str(), Some("optimal"));
}

#[test]
fn bench_passes_all_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let output = run(&["bench", "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["all_pass"].as_bool(), Some(true));
    assert!(out.join("zoh_compare.json").exists());
    assert!(out.join("sweep.csv").exists());
}
