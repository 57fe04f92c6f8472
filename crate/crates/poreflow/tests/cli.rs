//! End-to-end runs of the poreflow binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn poreflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poreflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr: {}",
        out.status.code(),
        stderr(out)
    );
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}\nstdout: {}",
        stderr(out),
        stdout(out)
    );
}

// Millimeter-scale sample: with L = 1 m the slab's dimensionless inverse
// permeability is ~1e15 and the Stokes-Brinkman flux drowns in solver noise.
fn generate_blocked(dir: &Path, name: &str, slab_phi: &str) {
    let out = poreflow(
        dir,
        &[
            "generate", name, "--n", "8", "--geometry", "blocked-channel", "--width", "4",
            "--slab-phi", slab_phi, "--slab-thickness", "2", "--length-m", "0.0009",
        ],
    );
    assert_ok(&out);
}

fn generate_channel(dir: &Path, name: &str) {
    let out = poreflow(
        dir,
        &["generate", name, "--n", "6", "--geometry", "channel", "--width", "4"],
    );
    assert_ok(&out);
}

#[test]
fn generate_info_classify_solve_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_blocked(dir, "blocked.raw", "60");
    assert!(dir.join("blocked.raw").exists());
    assert!(dir.join("blocked.raw.meta").exists(), "sidecar written");

    // Info: the category-A connectivity row shape.
    let out = poreflow(dir, &["info", "blocked.raw"]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("dims: 8 x 8 x 8"), "{text}");
    assert!(
        text.contains("connectivity z: Stokes: No, Stokes-Brinkman: Yes"),
        "{text}"
    );

    // Classify emits the JSON report.
    let out = poreflow(dir, &["classify", "blocked.raw", "--direction", "z"]);
    assert_ok(&out);
    let report: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["category"], "A");
    assert_eq!(report["direction"], "z");

    // Auto solve picks Darcy, attaches the cross-check, and is reproducible.
    let args = [
        "solve", "blocked.raw", "--deterministic", "--rtol", "1e-8", "--cross-check",
    ];
    let first = poreflow(dir, &args);
    assert_ok(&first);
    let record: Value = serde_json::from_str(stdout(&first).trim()).unwrap();
    assert_eq!(record["category"], "A");
    assert_eq!(record["model"], "darcy");
    assert_eq!(record["direction"], "z");
    assert_eq!(record["iterations_outer"], 1);
    assert_eq!(record["wall_time_s"], 0.0);
    assert!(record["k_mkDa"].as_f64().unwrap() > 0.0);
    let check = &record["stokes_brinkman_check"];
    assert!(check["k_mkDa"].as_f64().unwrap() > 0.0);
    // Darcy tracks the Stokes-Brinkman answer on a category-A sample.
    let (kd, ksb) = (
        record["k_mkDa"].as_f64().unwrap(),
        check["k_mkDa"].as_f64().unwrap(),
    );
    assert!((kd - ksb).abs() / ksb < 0.2, "darcy {kd} vs sb {ksb}");

    let second = poreflow(dir, &args);
    assert_ok(&second);
    assert_eq!(first.stdout, second.stdout, "deterministic reruns match");
}

#[test]
fn sealed_samples_solve_to_zero_in_auto_and_fail_when_forced() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_blocked(dir, "sealed.raw", "100");

    let out = poreflow(dir, &["solve", "sealed.raw", "--deterministic"]);
    assert_ok(&out);
    let record: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(record["category"], "NonPercolating");
    assert_eq!(record["model"], Value::Null);
    assert_eq!(record["k_hat"], 0.0);

    let out = poreflow(dir, &["solve", "sealed.raw", "--model", "stokes"]);
    assert_code(&out, 3);
}

#[test]
fn config_and_domain_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_channel(dir, "duct.raw");

    // Forced Darcy on a binary image with the fictitious permeability off.
    let out = poreflow(
        dir,
        &["solve", "duct.raw", "--model", "darcy", "--k-stokes", "none"],
    );
    assert_code(&out, 2);

    let out = poreflow(dir, &["solve", "duct.raw", "--model", "navier"]);
    assert_code(&out, 2);

    let out = poreflow(dir, &["solve", "duct.raw", "--rtol", "7"]);
    assert_code(&out, 2);

    // Missing input is an I/O failure, not a config one.
    let out = poreflow(dir, &["solve", "missing.raw", "--dims", "4x4x4"]);
    assert_code(&out, 1);
}

#[test]
fn starved_iteration_budget_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_channel(dir, "duct.raw");
    let out = poreflow(
        dir,
        &[
            "solve", "duct.raw", "--model", "stokes", "--rtol", "1e-10", "--maxit-inner", "2",
        ],
    );
    assert_code(&out, 4);
}

#[test]
fn sweep_reports_the_fictitious_permeability_proportionality() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_channel(dir, "duct.raw");

    let out = poreflow(
        dir,
        &[
            "sweep", "duct.raw", "--model", "darcy", "--parameter", "k-stokes",
            "--values", "1e5,1e7,1e9", "--rtol", "1e-10", "--deterministic",
        ],
    );
    assert_ok(&out);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,k_mkDa,iterations,wall_time_s");
    assert_eq!(lines.len(), 4);
    let k: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // Open duct under Darcy: k_eff rides the knob, the category-B misuse.
    assert!((k[1] / k[0] - 100.0).abs() < 1.0, "{k:?}");
    assert!((k[2] / k[1] - 100.0).abs() < 1.0, "{k:?}");

    // No values: just the header, exit 0.
    let out = poreflow(
        dir,
        &["sweep", "duct.raw", "--model", "darcy", "--parameter", "k-stokes"],
    );
    assert_ok(&out);
    assert_eq!(stdout(&out), "value,k_mkDa,iterations,wall_time_s\n");

    // A failing value keeps its row and the sweep continues.
    let out = poreflow(
        dir,
        &[
            "sweep", "duct.raw", "--model", "darcy", "--parameter", "rtol",
            "--values", "7,1e-8", "--deterministic",
        ],
    );
    assert_ok(&out);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains("nan"), "{text}");
    assert!(!lines[2].contains("nan"), "{text}");
}

#[test]
fn export_writes_vtk_and_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_channel(dir, "duct.raw");

    let out = poreflow(
        dir,
        &["export", "duct.raw", "--model", "stokes", "--output", "fields.vtk"],
    );
    assert_ok(&out);
    let vtk = std::fs::read_to_string(dir.join("fields.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    assert!(vtk.contains("DATASET STRUCTURED_POINTS"));
    assert!(vtk.contains("VECTORS velocity double"));

    let out = poreflow(
        dir,
        &[
            "solve", "duct.raw", "--model", "stokes", "--export-matrix", "duct",
            "--deterministic",
        ],
    );
    assert_ok(&out);
    for suffix in ["_a.mtx", "_shat.mtx"] {
        let text = std::fs::read_to_string(dir.join(format!("duct{suffix}"))).unwrap();
        assert!(
            text.starts_with("%%MatrixMarket matrix coordinate real general"),
            "{suffix}"
        );
    }
}

#[test]
fn config_file_supplies_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_blocked(dir, "blocked.raw", "60");
    std::fs::write(
        dir.join("run.cfg"),
        "model = darcy\nrtol = 1e-6\ndeterministic = true\n",
    )
    .unwrap();

    let out = poreflow(dir, &["solve", "blocked.raw", "--config", "run.cfg"]);
    assert_ok(&out);
    let record: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(record["model"], "darcy");
    assert_eq!(record["rtol_S"], 1.0e-6);
    assert_eq!(record["wall_time_s"], 0.0);
}

#[test]
fn periodic_solve_reports_no_drop() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = poreflow(
        dir,
        &[
            "generate", "sphere.raw", "--n", "8", "--geometry", "sphere", "--diameter", "0.5",
        ],
    );
    assert_ok(&out);

    let out = poreflow(
        dir,
        &[
            "solve", "sphere.raw", "--model", "stokes", "--bc", "periodic",
            "--rtol", "1e-4", "--deterministic",
        ],
    );
    assert_ok(&out);
    let record: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(record["dp"], 0.0);
    assert!(record["k_hat"].as_f64().unwrap() > 0.0);
}
