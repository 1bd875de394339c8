use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn pflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pflow")).args(args).output().expect("spawn pflow")
}

fn ok(args: &[&str]) -> Output {
    let out = pflow(args);
    assert!(
        out.status.success(),
        "pflow {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Exactly one manifest, listing every other file in the directory.
fn assert_manifest_complete(dir: &Path) {
    let m = manifest(dir);
    let mut listed: Vec<String> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    listed.sort();
    let mut present: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    present.sort();
    assert_eq!(listed, present);
    assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"));
}

fn gen_c(dir: &Path, n: usize) -> PathBuf {
    ok(&["gen", "--shape", "c_arc", "--n", &n.to_string(), "--out", s(dir)]);
    dir.join("c_arc.csv")
}

#[test]
fn gen_writes_cloud_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let path = gen_c(tmp.path(), 500);
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y");
    assert_eq!(lines.len(), 501);
    assert_manifest_complete(tmp.path());
    assert_eq!(manifest(tmp.path())["command"], "gen");
}

#[test]
fn gen_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    gen_c(a.path(), 200);
    gen_c(b.path(), 200);
    for name in ["c_arc.csv", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn unknown_shape_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = pflow(&["gen", "--shape", "blob", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(err.contains("blob"));
}

#[test]
fn fit_round_trips_checkpoint_and_records_noise() {
    let tmp = TempDir::new().unwrap();
    let data = gen_c(&tmp.path().join("data"), 100);
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--iterations", "3", "--noise-inject", "0.05", "--out", s(&out)]);
    assert_manifest_complete(&out);
    let m = manifest(&out);
    assert_eq!(m["config"]["noise_inject"], 0.05);
    assert_eq!(m["config"]["train"]["noise_sigma"], 0.05);
    let params = principal_flow::diffcore::ParamVector::load_checkpoint(out.join("checkpoint.json")).unwrap();
    assert_eq!(params.len(), principal_flow::diffcore::MlpArchitecture::default_field().n_params());
    let log = fs::read_to_string(out.join("training_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "iteration,term1,term2,total,wall_ms");
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn fit_config_file_and_flags_layer() {
    let tmp = TempDir::new().unwrap();
    let data = gen_c(&tmp.path().join("data"), 60);
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "n_iterations = 2\nn_trajectories = 3\nlearning_rate = 0.01\n[arch]\nlayer_widths = [2, 8, 2]\nactivation = \"tanh\"\n").unwrap();
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", s(&data), "--config", s(&cfg), "--lr", "0.02", "--out", s(&out)]);
    let train = &manifest(&out)["config"]["train"];
    assert_eq!(train["n_iterations"], 2);
    assert_eq!(train["n_trajectories"], 3);
    assert_eq!(train["learning_rate"], 0.02);
    assert_eq!(train["arch"]["layer_widths"], serde_json::json!([2, 8, 2]));
}

#[test]
fn fit_reruns_from_manifest_bit_identically() {
    let tmp = TempDir::new().unwrap();
    let data = gen_c(&tmp.path().join("data"), 60);
    let first = tmp.path().join("a");
    let second = tmp.path().join("b");
    ok(&[
        "fit", "--data", s(&data), "--iterations", "3", "--hidden", "8", "--seed", "4", "--no-wall-clock", "--out",
        s(&first),
    ]);
    ok(&["fit", "--data", s(&data), "--config", s(&first.join("manifest.json")), "--no-wall-clock", "--out", s(&second)]);
    for name in ["checkpoint.json", "training_log.csv"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn fit_missing_data_names_the_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.csv");
    let out = pflow(&["fit", "--data", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn fit_needs_an_anchor_for_unnamed_data() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("cloud.csv");
    fs::write(&data, "x,y\n0,0\n1,1\n").unwrap();
    let out = pflow(&["fit", "--data", s(&data), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_rows_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let run = |dir: &Path| {
        ok(&[
            "simulate", "--model", "analytic:rotation", "--init", "1,0", "--init", "0,0.5", "--init", "-1,-1",
            "--steps", "7", "--noise", "0.1", "--seed", "3", "--out", s(dir),
        ]);
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&a);
    run(&b);
    let text = fs::read_to_string(a.join("trajectories.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "traj_id,step,t,x,y");
    assert_eq!(text.lines().count() - 1, 3 * (7 + 1));
    assert_eq!(fs::read(a.join("trajectories.csv")).unwrap(), fs::read(b.join("trajectories.csv")).unwrap());
    assert_manifest_complete(&a);
}

#[test]
fn simulate_bad_checkpoint_fails() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let out = pflow(&["simulate", "--model", s(&bad), "--init", "0,0", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
}

fn sigma_column(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("ftle.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect()
}

#[test]
fn ftle_constant_field_is_zero() {
    let tmp = TempDir::new().unwrap();
    ok(&["ftle", "--model", "analytic:constant", "--nx", "9", "--ny", "7", "--out", s(tmp.path())]);
    let sigma = sigma_column(tmp.path());
    assert_eq!(sigma.len(), 63);
    let values: Vec<f64> = sigma.iter().filter(|v| !v.is_empty()).map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 7 * 5);
    assert!(values.iter().all(|v| v.abs() < 1e-6));
    assert_manifest_complete(tmp.path());
}

#[test]
fn ftle_three_by_three_has_one_interior_value() {
    let tmp = TempDir::new().unwrap();
    ok(&["ftle", "--model", "analytic:saddle", "--nx", "3", "--ny", "3", "--out", s(tmp.path())]);
    let sigma = sigma_column(tmp.path());
    assert_eq!(sigma.iter().filter(|v| !v.is_empty()).count(), 1);
}

#[test]
fn ftle_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let args = |d: &Path| {
        ok(&["ftle", "--model", "analytic:saddle", "--nx", "11", "--ny", "11", "--bounds", "-1,1,-2,2", "--out", s(d)]);
    };
    args(&tmp.path().join("a"));
    args(&tmp.path().join("b"));
    assert_eq!(fs::read(tmp.path().join("a/ftle.csv")).unwrap(), fs::read(tmp.path().join("b/ftle.csv")).unwrap());
}

#[test]
fn prc_eval_rigid_rotation_is_flat() {
    let tmp = TempDir::new().unwrap();
    ok(&["prc", "eval", "--model", "analytic:rigid-rotation", "--phases", "12", "--out", s(tmp.path())]);
    let text = fs::read_to_string(tmp.path().join("prc.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "phi_rad,target_shift,simulated_shift,relaxed_flag");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap().abs() < 1e-9);
        assert_eq!(r[3], "true");
    }
    assert_manifest_complete(tmp.path());
}

#[test]
fn prc_fit_writes_both_columns() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "prc", "fit", "--phases", "6", "--iterations", "2", "--hidden", "8,8", "--dt", "0.2", "--out",
        s(tmp.path()),
    ]);
    let text = fs::read_to_string(tmp.path().join("prc.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "5");
    assert!(first[2].parse::<f64>().is_ok());
    assert_manifest_complete(tmp.path());
}

#[test]
fn prc_zero_phases_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = pflow(&["prc", "eval", "--model", "analytic:rotation", "--phases", "0", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_analytic_model_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = pflow(&["ftle", "--model", "analytic:vortex", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}
