use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn gje(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gje")).args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut v = read_json(config("classical_1d.json"));
    v["generator"].as_object_mut().unwrap().remove("name");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = gje(&["solve", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    v["generator"]["name"] = "no-such-generator".into();
    std::fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(code(&gje(&["solve", "--config", bad.to_str().unwrap()], dir.path())), 2);
    assert_eq!(code(&gje(&["solve"], dir.path())), 2);
    assert_eq!(code(&gje(&["solve", "--config", "/nonexistent/config.json"], dir.path())), 2);
}

#[test]
fn solve_writes_a_converged_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("classical_1d.json");
    let o = gje(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(dir.path().join("report.json"));
    assert_eq!(report["solve"]["status"], "converged");
    assert!(report["solve"]["residual"].as_f64().unwrap() <= 1e-6);
    let heights = read_json(dir.path().join("heights.json"));
    assert_eq!(heights["heights"].as_array().unwrap().len(), 5);
    assert_eq!(heights["heights"][0], 0.0);
    assert!(dir.path().join("cells.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config("perturbed_2d.json");
    for d in [&a, &b] {
        assert_eq!(code(&gje(&["solve", "--config", cfg.to_str().unwrap()], d.path())), 0);
    }
    for f in ["report.json", "heights.json", "cells.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn budget_exhaustion_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("classical_1d.json");
    let o = gje(&["solve", "--config", cfg.to_str().unwrap(), "--tol", "1e-14", "--max-iter", "1"], dir.path());
    assert_eq!(code(&o), 1);
    assert_eq!(read_json(dir.path().join("report.json"))["solve"]["status"], "max_iter_exceeded");
}

#[test]
fn classical_check_passes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("classical_1d.json");
    assert_eq!(code(&gje(&["check", "--config", cfg.to_str().unwrap(), "--strict"], dir.path())), 0);
    let out = read_json(dir.path().join("check.json"));
    assert_eq!(out["passed"], true);
    for r in out["reports"].as_array().unwrap() {
        let name = r["condition"].as_str().unwrap();
        if ["A3w", "A3w*", "A4w"].contains(&name) {
            assert_eq!(r["worst_value"].as_f64(), Some(0.0), "{name}");
        }
    }
}

#[test]
fn diagnose_flags_a_raised_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("classical_1d.json");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&gje(&["solve", "--config", cfg], dir.path())), 0);
    let solved = dir.path().join("heights.json");
    let mut h = read_json(solved.clone());
    h["heights"][2] = (h["heights"][2].as_f64().unwrap() + 0.1).into();
    let raised = dir.path().join("raised.json");
    std::fs::write(&raised, h.to_string()).unwrap();

    let same = tempfile::tempdir().unwrap();
    let o = gje(&["diagnose", "--config", cfg, "--strict", "--solutions", solved.to_str().unwrap(), solved.to_str().unwrap()], same.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read_json(same.path().join("diagnose.json"))["flagged"], false);

    let diff = tempfile::tempdir().unwrap();
    let o = gje(&["diagnose", "--config", cfg, "--strict", "--solutions", raised.to_str().unwrap(), solved.to_str().unwrap()], diff.path());
    assert_eq!(code(&o), 3);
    assert_eq!(read_json(diff.path().join("diagnose.json"))["flagged"], true);
}

#[test]
fn measure_transform_and_flow_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("classical_1d.json");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&gje(&["solve", "--config", cfg], dir.path())), 0);
    let heights = dir.path().join("heights.json");
    assert_eq!(code(&gje(&["measure", "--config", cfg, "--function", heights.to_str().unwrap()], dir.path())), 0);
    assert!(dir.path().join("measure.json").exists());
    assert_eq!(code(&gje(&["transform", "--config", cfg], dir.path())), 0);
    assert!(dir.path().join("frame.json").exists() && dir.path().join("frame.csv").exists());
    assert_eq!(code(&gje(&["flow", "--config", cfg, "--strict"], dir.path())), 0);
    let flow = read_json(dir.path().join("flow.json"));
    assert_eq!(flow["intersection"]["holds"], true);
}
