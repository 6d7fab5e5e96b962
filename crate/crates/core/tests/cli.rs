//! End-to-end tests of the `wmbo` binary: artifact layout, manifest
//! round trips, determinism, environment fallbacks, and exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmbo"))
        .args(args)
        .env_remove("WMBO_OUT")
        .output()
        .expect("binary launches")
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmbo"))
        .args(args)
        .env_remove("WMBO_OUT")
        .env(key, value)
        .output()
        .expect("binary launches")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Sorted file names in a directory.
fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn kernel_verify_passes_and_is_byte_identical_across_reruns() {
    let dir = tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let first = run(&["kernel-verify", "--out", out_a.to_str().unwrap()]);
    assert_eq!(exit_code(&first), 0, "stderr: {}", stderr_text(&first));
    let second = run(&["kernel-verify", "--out", out_b.to_str().unwrap()]);
    assert_eq!(exit_code(&second), 0);

    let report_a = fs::read(out_a.join("verify.json")).unwrap();
    let report_b = fs::read(out_b.join("verify.json")).unwrap();
    assert_eq!(report_a, report_b, "reports must be byte-identical");

    let report: serde_json::Value = serde_json::from_slice(&report_a).unwrap();
    assert_eq!(report["all_pass"], serde_json::json!(true));
}

#[test]
fn evolve_writes_the_full_artifact_set() {
    let dir = tempdir().unwrap();
    let out = run(&[
        "evolve",
        "--shape",
        "circle:0.5,0.5,0.2",
        "--n",
        "64",
        "--h",
        "1e-5",
        "--steps",
        "4",
        "--snapshot-every",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    assert_eq!(
        listing(dir.path()),
        [
            "final.pgm",
            "manifest.json",
            "overlay.svg",
            "snapshot_000000.pgm",
            "snapshot_000002.pgm",
            "snapshot_000004.pgm",
            "trajectory.csv",
        ]
    );
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,t,area,components,energy,max_disp,status");
    assert_eq!(lines.len(), 6, "header plus rows 0..=4");
    let pgm = fs::read(dir.path().join("final.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"), "binary PGM magic");
    let svg = fs::read_to_string(dir.path().join("overlay.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("k=4"), "overlay labels every snapshot");
}

#[test]
fn rerunning_an_emitted_manifest_reproduces_the_artifacts() {
    let dir = tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let first = run(&[
        "evolve",
        "--shape",
        "cassini:0.6825,0.678",
        "--L",
        "5",
        "--n",
        "64",
        "--h",
        "0.004",
        "--steps",
        "2",
        "--snapshot-every",
        "1",
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&first), 0, "stderr: {}", stderr_text(&first));

    let manifest = out_a.join("manifest.json");
    let second = run(&[
        "evolve",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&second), 0, "stderr: {}", stderr_text(&second));

    assert_eq!(listing(&out_a), listing(&out_b));
    for name in listing(&out_a) {
        if name == "manifest.json" {
            continue;
        }
        let a = fs::read(out_a.join(&name)).unwrap();
        let b = fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical");
    }
    // The manifests agree except for the overridden output directory.
    let parse = |p: &Path| -> BTreeMap<String, String> {
        serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
    };
    let mut map_a = parse(&manifest);
    let mut map_b = parse(&out_b.join("manifest.json"));
    assert_ne!(map_a.remove("out"), map_b.remove("out"));
    assert_eq!(map_a, map_b);
}

#[test]
fn flat_config_files_drive_runs() {
    let dir = tempdir().unwrap();
    let target = dir.path().join("tables");
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        format!(
            "# kernel profile table\ncommand = kernel-table\nr-max = 8\nsamples = 16\nout = {}\n",
            target.display()
        ),
    )
    .unwrap();
    let out = run(&["kernel-table", "--config", config.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    let csv = fs::read_to_string(target.join("kernel_table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "r,phi1,psi,combination");
    assert_eq!(lines.len(), 18, "header plus samples+1 rows");
}

#[test]
fn wmbo_out_sets_the_default_output_directory() {
    let dir = tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = run_with_env(
        &["kernel-table", "--samples", "8"],
        "WMBO_OUT",
        target.to_str().unwrap(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    assert!(target.join("kernel_table.csv").exists());
    assert!(target.join("manifest.json").exists());
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap().to_string();

    let unknown_flag = run(&["evolve", "--bogus", "1"]);
    assert_eq!(exit_code(&unknown_flag), 2);

    let bad_grid = run(&["evolve", "--n", "1000", "--out", &out_dir]);
    assert_eq!(exit_code(&bad_grid), 2);
    assert!(stderr_text(&bad_grid).contains("power of two"));

    let bad_shape = run(&["evolve", "--shape", "blob:1", "--out", &out_dir]);
    assert_eq!(exit_code(&bad_shape), 2);

    let bad_snapshots = run(&[
        "evolve",
        "--steps",
        "5",
        "--snapshot-every",
        "2",
        "--out",
        &out_dir,
    ]);
    assert_eq!(exit_code(&bad_snapshots), 2);

    let config = dir.path().join("typo.cfg");
    fs::write(&config, "stepz = 3\n").unwrap();
    let bad_key = run(&["evolve", "--config", config.to_str().unwrap()]);
    assert_eq!(exit_code(&bad_key), 2);
    assert!(stderr_text(&bad_key).contains("stepz"));
}

#[test]
fn regime_failures_exit_with_code_1() {
    let dir = tempdir().unwrap();
    let out = run(&[
        "converge-circle",
        "--n",
        "256",
        "--r0",
        "0.01",
        "--h",
        "1e-5",
        "--t-final",
        "1e-5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1, "stderr: {}", stderr_text(&out));
    assert!(stderr_text(&out).contains("regime"));
    // The manifest still lands so the failing run can be reproduced.
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn converge_circle_emits_reports_and_the_error_plot() {
    let dir = tempdir().unwrap();
    let out = run(&[
        "converge-circle",
        "--n",
        "256",
        "--r0",
        "0.2",
        "--h",
        "4e-5,2e-5",
        "--t-final",
        "8e-5",
        "--jobs",
        "2",
        "--emit-svg",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    assert_eq!(
        listing(dir.path()),
        ["error_plot.svg", "manifest.json", "report.csv", "report.json"]
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["h_values"].as_array().unwrap().len(), 2);
    assert_eq!(report["errors"].as_array().unwrap().len(), 2);
    assert!(report["fitted_slope"].is_number());
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("h,abs_area_error\n"));
    let svg = fs::read_to_string(dir.path().join("error_plot.svg")).unwrap();
    assert!(svg.contains("O(h)"));
}

#[test]
fn shape_preview_reports_geometry_stats() {
    let dir = tempdir().unwrap();
    let out = run(&[
        "shape-preview",
        "--shape",
        "band:y,0.25",
        "--n",
        "64",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_text(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("preview.json")).unwrap())
            .unwrap();
    // A half-width-0.25 band fills half the unit domain with two
    // interface lines crossing the seam.
    assert!((report["area_fraction"].as_f64().unwrap() - 0.5).abs() < 0.02);
    assert_eq!(report["components"], serde_json::json!(2));
    assert_eq!(report["seam_clearance_cells"], serde_json::json!(0));
    assert!(dir.path().join("preview.pgm").exists());
    assert!(dir.path().join("preview.svg").exists());
}
