use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rbm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RBM_THREADS")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).expect("report written");
    serde_json::from_str(&text).expect("report is JSON")
}

#[test]
fn validate_atlas_reports_both_drift_conventions() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbm(&["validate", "--model", "atlas:3", "--deterministic"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "validate");
    assert_eq!(r["schema"], "rbm.report.v1");
    assert!(r.get("timestamp_unix").is_none());
    assert_eq!(r["pass"], true);
    let rb = &r["results"]["rank_based"];
    let atlas: Vec<f64> = serde_json::from_value(rb["b_atlas"].clone()).unwrap();
    let sde: Vec<f64> = serde_json::from_value(rb["b_sde"].clone()).unwrap();
    assert!((atlas[0] - 2.0 / 3.0).abs() < 1e-12 && (atlas[1] - 1.0 / 3.0).abs() < 1e-12);
    assert!((sde[0] - 4.0 / 3.0).abs() < 1e-12 && (sde[1] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn timestamp_present_without_deterministic_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbm(&["validate", "--model", "atlas:3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(report(dir.path(), "validate")["timestamp_unix"].is_u64());
}

#[test]
fn bounds_report_carries_named_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbm(&["bounds", "--model", "atlas:4", "--deterministic"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "bounds");
    let br = &r["results"]["bound_report"];
    for key in [
        "nR", "aTheta", "bTheta", "R1", "R2", "A0", "D2", "C1z", "C2z", "deltaP", "D1", "t0", "C1x", "C2x", "tMin",
        "tRelBound",
    ] {
        assert!(br[key].is_number(), "missing {key}");
    }
    assert_eq!(br["A0"], 68.0);
    // nothing asserted, so the report is a pass with an empty check list
    assert_eq!(r["checks"].as_array().map(Vec::len), Some(0));
    assert_eq!(r["pass"], true);
    let csv = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,mean,std_err,bound"));
}

#[test]
fn simulate_writes_trajectory_triplet() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbm(
        &["simulate", "--model", "atlas:3", "--dt", "0.01", "--horizon", "1", "--deterministic"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(meta["schema"], "rbm.trajectory.v1");
    let bin = std::fs::read(dir.path().join("trajectory.bin")).unwrap();
    // header, 101 states and 100 increments of dimension 2
    assert_eq!(bin.len(), 40 + 8 * (101 * 2 + 100 * 2));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x1,x2,dl1,dl2"));
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn malformed_model_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    for model in [r#"{"d":1,"mu":[NaN]}"#, "atlas:1", "no/such/file.json", r#"{"d":1,"mu":[-1],"D":[[1,0]],"R":[[1]]}"#] {
        let out = rbm(&["validate", "--model", model], &target);
        assert_eq!(out.status.code(), Some(2), "{model}");
        assert!(!target.exists(), "{model} produced output");
    }
}

#[test]
fn bad_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["bounds", "--model", "atlas:3", "--threads", "0"],
        vec!["simulate", "--model", "atlas:3", "--dt", "-1"],
        vec!["couple", "--model", "atlas:3", "--x0", "1,2,3"],
        vec!["frobnicate"],
    ] {
        let out = rbm(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn failed_check_exits_one_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let unstable = r#"{"d":1,"mu":[1.0],"D":[[1.0]],"R":[[1.0]]}"#;
    let out = rbm(&["validate", "--model", unstable, "--deterministic"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path(), "validate");
    assert_eq!(r["pass"], false);
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["name"] == "A2_stable" && c["status"] == "fail"));
}

#[test]
fn deterministic_runs_are_byte_identical_across_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["couple", "--model", "atlas:3", "--paths", "64", "--dt", "0.01", "--horizon", "3", "--deterministic"];
    let mut args_a = common.to_vec();
    args_a.extend(["--threads", "1"]);
    let mut args_b = common.to_vec();
    args_b.extend(["--threads", "4"]);
    let ra = rbm(&args_a, a.path());
    let rb = rbm(&args_b, b.path());
    assert_eq!(ra.status.code(), rb.status.code());
    for name in ["couple.json", "couple.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rbm"))
        .args(["validate", "--model", "atlas:3", "--out"])
        .arg(dir.path())
        .env("RBM_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn echoed_config_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbm(
        &["couple", "--model", "atlas:3", "--paths", "32", "--dt", "0.02", "--horizon", "2", "--seed", "9", "--deterministic"],
        dir.path(),
    );
    assert!(out.status.code().unwrap() <= 1);
    let r = report(dir.path(), "couple");
    let sim = &r["config"]["sim"];
    let cmd = &r["config"]["command"];
    let replay = tempfile::tempdir().unwrap();
    let args: Vec<String> = vec![
        cmd["name"].as_str().unwrap().to_string(),
        "--model".into(),
        cmd["model"].as_str().unwrap().into(),
        "--x0".into(),
        cmd["x0"].as_str().unwrap().into(),
        "--paths".into(),
        sim["paths"].to_string(),
        "--dt".into(),
        sim["dt"].to_string(),
        "--horizon".into(),
        sim["horizon"].to_string(),
        "--seed".into(),
        sim["seed"].to_string(),
        "--deterministic".into(),
    ];
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    rbm(&args, replay.path());
    assert_eq!(
        std::fs::read(dir.path().join("couple.json")).unwrap(),
        std::fs::read(replay.path().join("couple.json")).unwrap()
    );
}
