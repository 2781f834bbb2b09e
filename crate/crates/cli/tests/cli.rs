use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn clmmse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clmmse"))
        .args(args)
        .env_remove("CLMMSE_BUDGET_SCALARS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn validate_reference_models() {
    for name in ["data1.json", "toto.json"] {
        let out = clmmse(&["validate", "--model", data(name).to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).starts_with("ok: N=4 n=2 p=1 q=2"));
    }
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(data("data1.json"))
        .unwrap()
        .replacen("[0.3, 0.2, 0.1, 0.4]", "[0.3, 0.2, 0.1, 0.5]", 1);
    std::fs::write(&bad, text).unwrap();
    let out = clmmse(&["validate", "--model", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("violation: transition-row-sum"));
    assert!(stderr(&out).starts_with("error: invalid-model: "));
}

#[test]
fn info_prints_gain_count() {
    let out = clmmse(&["info", "--n", "4", "--clusters", "2", "--horizon", "10"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["gains"], 4092);
    assert_eq!(v["factorizations"], 2044);

    let out = clmmse(&["info", "--n", "4", "--clusters", "5", "--horizon", "10"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: argument: "));
}

#[test]
fn design_evaluate_filter_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.bin");
    let tree_s = tree.to_str().unwrap();
    let model = data("data1.json");
    let out = clmmse(&[
        "design",
        "--model",
        model.to_str().unwrap(),
        "--clusters",
        "{1,2,3}|{4}",
        "--horizon",
        "10",
        "--out",
        tree_s,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let design: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(design["stored_gains"], 4092);

    let out = clmmse(&["evaluate", "--tree", tree_s, "--k", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let eval: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let mse = eval["analytic_mse"].as_f64().unwrap();
    assert_eq!(mse, design["analytic_mse"].as_f64().unwrap());
    assert!((mse - 0.6691).abs() < 1e-4);

    let out = clmmse(&["evaluate", "--tree", tree_s, "--trials", "2000", "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let eval: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let (mc, se) = (eval["mc_mse"].as_f64().unwrap(), eval["mc_stderr"].as_f64().unwrap());
    assert!((mc - mse).abs() <= 4.0 * se);

    let traj = dir.path().join("traj.csv");
    let out = clmmse(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--horizon",
        "10",
        "--seed",
        "8",
        "--out",
        traj.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = clmmse(&["filter", "--tree", tree_s, "--input", traj.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    assert!(csv.starts_with("k,xhat_1,xhat_2\n0,0,0\n"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn evaluate_beyond_horizon_fails() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.bin");
    let out = clmmse(&[
        "design",
        "--model",
        data("toto.json").to_str().unwrap(),
        "--clusters",
        "lmmse",
        "--horizon",
        "3",
        "--out",
        tree.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = clmmse(&["evaluate", "--tree", tree.to_str().unwrap(), "--k", "4"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: horizon: "));
}

#[test]
fn randomized_commands_need_a_seed() {
    let model = data("data1.json");
    let out = clmmse(&["simulate", "--model", model.to_str().unwrap(), "--horizon", "3"]);
    assert!(!out.status.success());
    let out = clmmse(&["sweep", "--model", model.to_str().unwrap(), "--horizon", "3", "--trials", "10"]);
    assert!(!out.status.success());
}

#[test]
fn sweep_csv_is_stable() {
    let model = data("toto.json");
    let args = [
        "sweep",
        "--model",
        model.to_str().unwrap(),
        "--horizon",
        "4",
        "--trials",
        "500",
        "--seed",
        "1",
        "--omit-timing",
    ];
    let a = clmmse(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&clmmse(&args)));
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "clustering,n_clusters,analytic_mse,mc_mse,mc_stderr,stored_gains,build_ms"
    );
    assert_eq!(lines.count(), 15);
}

#[test]
fn budget_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_clmmse"))
        .args([
            "design",
            "--model",
            data("data1.json").to_str().unwrap(),
            "--clusters",
            "kalman",
            "--horizon",
            "10",
            "--out",
            dir.path().join("t.bin").to_str().unwrap(),
        ])
        .env("CLMMSE_BUDGET_SCALARS", "100000")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: budget: "));
}

#[test]
fn missing_file_is_an_io_error() {
    let out = clmmse(&["validate", "--model", "/nonexistent/model.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error: io: "));
}
