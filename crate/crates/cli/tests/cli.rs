use std::path::Path;
use std::process::{Command, Output};

use redistrib_core::experiments::evaluate;
use redistrib_core::{adversarial_profile, Mechanism, MechanismKind};
use serde_json::Value;

const WORKED_EXAMPLE: &str = r#"{"n": 4, "p": 2, "bids": [[4, 5], [2, 1], [1, 4], [1, 0]]}"#;

fn redistrib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redistrib"))
        .args(args)
        .env_remove("REDISTRIB_SEED")
        .output()
        .expect("binary runs")
}

fn json_ok(args: &[&str]) -> Value {
    let out = redistrib(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_bailey_cavallo_on_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.json", WORKED_EXAMPLE);
    let v = json_ok(&["run", "--mech", "bailey_cavallo", "--input", &input]);
    assert_eq!(v["rebates"], serde_json::json!([0.25, 0.75, 0.25, 1.25]));
    assert_eq!(v["rebates_exact"], serde_json::json!([[1, 4], [3, 4], [1, 4], [5, 4]]));
    assert_eq!(v["payments_exact"], serde_json::json!([[2, 1], [0, 1], [3, 1], [0, 1]]));
    assert_eq!(v["fraction"], 0.5);
    assert_eq!(v["allocation"][1], serde_json::json!({"agent": 3, "object": 2}));
}

#[test]
fn coeffs_hetero_exact() {
    let v = json_ok(&["coeffs", "--mech", "hetero", "--n", "5", "--p", "2"]);
    assert_eq!(v["alpha"], serde_json::json!([[3, 11], [-2, 11]]));
    let v = json_ok(&["coeffs", "--mech", "wco", "--n", "5", "--p", "2"]);
    assert_eq!(v["c"], serde_json::json!([[5, 11], [-3, 11]]));
    assert_eq!(v["e_star"], serde_json::json!([5, 11]));
    let v = json_ok(&["coeffs", "--mech", "scaling", "--n", "5", "--p", "2", "--gamma", "1,1"]);
    assert_eq!(v["e_star"], serde_json::json!([5, 11]));
}

#[test]
fn adversarial_round_trip_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adv.json");
    let path = path.to_str().unwrap();
    let v = json_ok(&["adversarial", "--n", "4", "--p", "2", "--out", path]);
    assert_eq!(v["surplus_exact"], serde_json::json!([1, 1]));
    for mech in ["bailey_cavallo", "hetero"] {
        let from_file = json_ok(&["run", "--mech", mech, "--input", path]);
        let profile = adversarial_profile(4, 2).unwrap();
        let kind: MechanismKind = mech.parse().unwrap();
        let direct = evaluate(&profile, &Mechanism::prepare(kind, 4, 2, None).unwrap()).unwrap();
        let rebates: Vec<String> = direct.rebates.iter().map(|r| format!("[{},{}]", r.numer(), r.denom())).collect();
        assert_eq!(from_file["rebates_exact"].to_string(), format!("[{}]", rebates.join(",")));
        assert_eq!(from_file["surplus_exact"], serde_json::json!([1, 1]));
    }
}

#[test]
fn rank_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.json", WORKED_EXAMPLE);
    let v = json_ok(&["rank", "--input", &input]);
    assert_eq!(v["classes"], serde_json::json!([[1], [3], [2], [4]]));
    assert_eq!(v["order"], "1 > 3 > 2 > 4");
    let cyc = write(dir.path(), "c.json", r#"{"n":5,"p":2,"bids":[[1,0],[0,2],[1,1],[0,3],[2,0]]}"#);
    assert_eq!(error_kind(&redistrib(&["rank", "--input", &cyc])), "intransitive");
}

#[test]
fn simulate_is_worker_invariant() {
    let args = ["simulate", "--mech", "hetero", "--n", "5", "--p", "2", "--gen", "binary"];
    let one = redistrib(&[&args[..], &["--workers", "1"]].concat());
    let two = redistrib(&[&args[..], &["--workers", "2"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, two.stdout);
    let v: Value = serde_json::from_slice(&one.stdout).unwrap();
    assert!((v["min_fraction"].as_f64().unwrap() - 5.0 / 11.0).abs() < 1e-9);
    assert_eq!(v["profiles"], 1024);
}

#[test]
fn seed_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_redistrib"))
        .args(["simulate", "--mech", "bc", "--n", "4", "--p", "1", "--trials", "10"])
        .env("REDISTRIB_SEED", "77")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 77);
}

#[test]
fn simulate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "many.json", &format!("[{WORKED_EXAMPLE}, {WORKED_EXAMPLE}]"));
    let v = json_ok(&["simulate", "--mech", "bailey_cavallo", "--n", "4", "--p", "2", "--gen", &format!("file:{input}")]);
    assert_eq!(v["profiles"], 2);
    assert_eq!(v["min_fraction"], 0.5);
}

#[test]
fn figure1_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.csv");
    let v = json_ok(&[
        "figure1", "--n", "5", "--p-min", "1", "--p-max", "3", "--trials", "50", "--seed", "4", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(v["comparisons"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("p,mech,worst_fraction,mean_fraction,trials,seed"));
    assert!(lines.any(|l| l.starts_with("3,hetero,")));
}

#[test]
fn failures_are_reported_as_json() {
    assert_eq!(error_kind(&redistrib(&["coeffs", "--mech", "hetero", "--n", "3", "--p", "2"])), "invalid_size");
    assert_eq!(error_kind(&redistrib(&["run", "--mech", "wco", "--input", "/nonexistent.json"])), "io");
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"n": 2, "p": 1, "bids": [[1]]}"#);
    assert_eq!(error_kind(&redistrib(&["run", "--mech", "bc", "--input", &bad])), "invalid_profile");
    let het = write(dir.path(), "a.json", WORKED_EXAMPLE);
    assert_eq!(error_kind(&redistrib(&["run", "--mech", "wco", "--input", &het])), "not_homogeneous");
    assert_eq!(error_kind(&redistrib(&["simulate", "--mech", "hetero", "--n", "9", "--p", "3", "--gen", "binary"])), "enumeration_cap");
    assert_eq!(error_kind(&redistrib(&["simulate", "--mech", "hetero", "--n", "5", "--p", "2", "--gen", "uniform:4:1"])), "invalid_config");
    assert_eq!(error_kind(&redistrib(&["coeffs", "--mech", "wco"])), "usage");
    assert_eq!(error_kind(&redistrib(&["simulate", "--mech", "bc", "--n", "4", "--p", "1", "--workers", "0"])), "usage");
}
