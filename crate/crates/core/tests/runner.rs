mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mfoc::runner::{self, ExitStatus};
use serde_json::Value;

fn baseline_text() -> String {
    fs::read_to_string(common::configs_dir().join("baseline.toml")).unwrap()
}

/// Writes `text` with its output directory redirected into `root`.
fn write_config(root: &Path, name: &str, text: &str) -> PathBuf {
    let out = root.join(format!("runs/{name}"));
    let text = text.replace("directory = \"runs/baseline\"", &format!("directory = {:?}", out.display().to_string()));
    let path = root.join(format!("{name}.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn baseline_run_succeeds_and_persists_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "base", &baseline_text());
    let r = runner::run(&cfg);
    assert_eq!(r.status, ExitStatus::Success, "{:?}", r.message);
    let dir = r.run_dir.unwrap();
    let m = manifest(&dir);
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["converged"], true);
    assert_eq!(m["certification"]["passed"], true);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let cost = &m["cost"];
    let total = cost["running"].as_f64().unwrap() + cost["terminal"].as_f64().unwrap();
    assert_eq!(cost["total"].as_f64().unwrap(), total);
    for f in [
        "config.toml",
        "assumptions.json",
        "iterations.csv",
        "cost.json",
        "diagnostics/fp.csv",
        "diagnostics/hjb.csv",
        "solution/phi.mfoc",
        "solution/rho.mfoc",
        "solution/control.mfoc",
        "snapshots/phi_00000.mfoc",
        "snapshots/rho_00512.mfoc",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let iterations = fs::read_to_string(dir.join("iterations.csv")).unwrap();
    assert_eq!(iterations.lines().count(), 1 + m["iterations"].as_u64().unwrap() as usize);
}

#[test]
fn identical_configs_give_identical_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "det", &baseline_text());
    let b = runner::run(&cfg).run_dir.unwrap();
    let a = tmp.path().join("first");
    fs::rename(&b, &a).unwrap();
    assert_eq!(runner::run(&cfg).run_dir.unwrap(), b);
    assert!(fs::read(a.join("manifest.json")).unwrap() == fs::read(b.join("manifest.json")).unwrap());
    let mut names: Vec<_> = fs::read_dir(a.join("snapshots")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let (x, y) = (fs::read(a.join("snapshots").join(&name)).unwrap(), fs::read(b.join("snapshots").join(&name)).unwrap());
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn rough_power_law_is_rejected_by_the_assumptions() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text().replace(
        "kind = \"trigonometric\"\nmodes = [{ amplitude = -0.025330295910584444, wave = [1] }]",
        "kind = \"power_law\"\na = 1.5\nb = 2.0",
    );
    assert!(text.contains("power_law"));
    let r = runner::run(&write_config(tmp.path(), "rough", &text));
    assert_eq!(r.status, ExitStatus::Assumptions);
    assert_eq!(r.status.code(), 3);
    assert_eq!(manifest(&r.run_dir.unwrap())["exit_code"], 3);
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text().replace("tol = 1e-6\nmax_iter = 200", "tol = 1e-15\nmax_iter = 2");
    let r = runner::run(&write_config(tmp.path(), "capped", &text));
    assert_eq!(r.status.code(), 4);
    let dir = r.run_dir.unwrap();
    let m = manifest(&dir);
    assert_eq!(m["converged"], false);
    assert_eq!(m["iterations"], 2);
    // diagnostics survive the failure
    assert!(dir.join("iterations.csv").is_file());
}

#[test]
fn malformed_configs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = baseline_text().replace("max_iter", "max_iters");
    assert_eq!(runner::run(&write_config(tmp.path(), "typo", &typo)).status.code(), 2);
    assert_eq!(runner::validate(&tmp.path().join("missing.toml")).status.code(), 2);
}

#[test]
fn validate_reports_all_assumptions() {
    let r = runner::validate(&common::configs_dir().join("baseline.toml"));
    assert_eq!(r.status, ExitStatus::Success);
    let report = r.manifest.unwrap().assumptions.unwrap();
    assert!(report.all_passed());
    for id in ["A1", "A2", "A3"] {
        assert!(report.get(id).is_some(), "{id} missing");
    }
}

#[test]
fn particles_and_probe_read_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = baseline_text().replace("n = 10000\nseeds = [0, 1, 2, 3, 4]", "n = 2000\nseeds = [3]");
    let cfg = write_config(tmp.path(), "pp", &text);
    let dir = runner::run(&cfg).run_dir.unwrap();
    let p = runner::particles(&cfg, &dir);
    assert_eq!(p.status, ExitStatus::Success, "{:?}", p.message);
    assert!(dir.join("particles/report.json").is_file());
    assert!(dir.join("particles/cloud_seed3_final.csv").is_file());
    let (r, report) = runner::probe(&cfg, &dir);
    assert_eq!(r.status, ExitStatus::Success, "{:?}", r.message);
    assert!(report.unwrap().passed);
    assert!(dir.join("probe/report.json").is_file());
}

#[test]
fn cli_honours_the_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mfoc"))
        .arg("solve")
        .arg(common::configs_dir().join("baseline.toml"))
        .env("MFOC_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(&tmp.path().join("runs/baseline"))["exit_code"], 0);

    let bad = Command::new(env!("CARGO_BIN_EXE_mfoc"))
        .args(["validate", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
