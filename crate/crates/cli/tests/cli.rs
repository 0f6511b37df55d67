//! Runs the `afflow` binary end to end: exit codes, output layout, manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use afflow_cli::export::{export_plot_data, Table};
use afflow_cli::CliError;
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn afflow(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_afflow"));
    cmd.args(args).env_remove("AFFLOW_OUT");
    cmd
}

fn run(mut cmd: Command) -> Output {
    cmd.output().expect("spawn afflow")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(body).unwrap()).unwrap();
    p
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn sphere_flow(t_end: f64, m: usize) -> Value {
    let sphere = serde_json::json!({ "kind": "sphere", "n": 2, "r0": 1.0, "center": [0, 0, 0] });
    serde_json::json!({
        "scenario": "flow",
        "grid": { "n": 2, "box": [[-1, 1], [-1, 1]], "m": m },
        "oracle": sphere,
        "flow": {
            "dt_policy": { "policy": "adaptive", "cfl": 0.4 },
            "t_end": t_end,
            "boundary": { "mode": "oracle", "oracle": sphere }
        },
        "monitors": [{ "kind": "oracle_error", "tol": 1e-1 }]
    })
}

#[test]
fn negative_dt_is_rejected_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = sphere_flow(0.1, 17);
    cfg["flow"]["dt_policy"] = serde_json::json!({ "policy": "fixed", "dt": -1e-3 });
    let path = write_config(tmp.path(), "neg.json", &cfg);
    let out_dir = tmp.path().join("out");
    let out = run(afflow(&["flow", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]));
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = sphere_flow(0.1, 17);
    cfg["tolerance"] = serde_json::json!(1e-3);
    let path = write_config(tmp.path(), "typo.json", &cfg);
    let out = run(afflow(&["flow", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerance"));
}

#[test]
fn config_for_another_subcommand_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("verify_paraboloid.json");
    let out = run(afflow(&["flow", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(code(&out), 2);
}

#[test]
fn tolerance_flags_outside_acceptance_are_rejected() {
    let cfg = configs().join("verify_paraboloid.json");
    let out = run(afflow(&["verify-soliton", "--config", cfg.to_str().unwrap(), "--tol-scale", "0.5"]));
    assert_eq!(code(&out), 2);
}

#[test]
fn paraboloid_residual_vanishes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("verify_paraboloid.json");
    let out =
        run(afflow(&["verify-soliton", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let csv = fs::read_to_string(tmp.path().join("residual.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# residual"));
    assert_eq!(lines.next(), Some("# y0,y1,residual"));
    let worst = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap().abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst:e}");
    assert_eq!(manifest(tmp.path())["data"]["status"], "pass");
}

#[test]
fn manifest_data_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("invariants_sphere.json");
    for dir in [&a, &b] {
        let out =
            run(afflow(&["invariants", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]));
        assert_eq!(code(&out), 0, "{}", stdout(&out));
    }
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_eq!(ma["data"], mb["data"]);
    assert!(ma["timing"]["started_unix_ms"].is_u64());
    for f in ma["data"]["outputs"].as_array().unwrap() {
        let f = f.as_str().unwrap();
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn environment_overrides_out_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("from_env");
    let flag_dir = tmp.path().join("from_flag");
    let cfg = configs().join("verify_paraboloid.json");
    let mut cmd = afflow(&["verify-soliton", "--config", cfg.to_str().unwrap(), "--out", flag_dir.to_str().unwrap()]);
    cmd.env("AFFLOW_OUT", &env_dir);
    assert_eq!(code(&run(cmd)), 0);
    assert!(env_dir.join("manifest.json").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn flow_past_extinction_aborts_with_partial_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "late.json", &sphere_flow(0.7, 17));
    let out_dir = tmp.path().join("out");
    let out = run(afflow(&["flow", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]));
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["data"]["status"], "aborted");
    assert_eq!(m["data"]["partial"], true);
    assert!(m["data"]["error"].is_string());
    assert!(out_dir.join("dt_log.csv").exists());
    assert!(out_dir.join("frames/frame_0000.json").exists());
}

#[test]
fn several_configs_get_keyed_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "short.json", &sphere_flow(0.05, 17));
    let b = write_config(tmp.path(), "longer.json", &sphere_flow(0.1, 17));
    let root = tmp.path().join("out");
    let out = run(afflow(&[
        "flow",
        "--config",
        a.to_str().unwrap(),
        "--config",
        b.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
        "--parallel",
        "2",
    ]));
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    for key in ["short", "longer"] {
        assert_eq!(manifest(&root.join(key))["data"]["status"], "pass", "{key}");
    }
}

#[test]
fn acceptance_subset_prints_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(afflow(&["acceptance", "--only", "3", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let rows: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("acceptance.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["id"], 3);
    assert_eq!(rows[0]["pass"], true);
}

#[test]
fn tightened_tolerance_fails_the_criterion() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(afflow(&["acceptance", "--only", "3", "--tol-scale", "1e-9", "--out", tmp.path().to_str().unwrap()]));
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn unknown_plot_column_is_a_missing_artifact() {
    let t = Table::new("speed").with("t", vec![0.0]).with("q_max", vec![2.0]);
    let err = export_plot_data(&t, &["q_mid"]).unwrap_err();
    assert!(matches!(err, CliError::MissingArtifact(_)));
    assert_eq!(err.exit_code(), 3);
}
