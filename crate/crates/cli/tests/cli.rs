use std::path::Path;
use std::process::{Command, Output};

fn decq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decq")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const BAD_GAME: &str = r#"{
  "num_dms": 1, "num_states": 2, "action_counts": [2],
  "costs": [[[0.0, 1.0], [1.0, 0.0]]],
  "kernel": [[[0.5, 0.6], [1.0, 0.0]], [[0.5, 0.5], [0.0, 1.0]]],
  "discounts": [0.9], "initial_dist": [1.0, 0.0]
}"#;

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", BAD_GAME);
    let out = decq(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("violation"), "{text}");
}

#[test]
fn validate_accepts_the_default_game() {
    let out = decq(&["validate"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(decq(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(decq(&["graph", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(decq(&["graph", "--variant", "sideways"]).status.code(), Some(2));
}

#[test]
fn table1_writes_the_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "pd.json",
        r#"{"game": {"builder": "pd"}, "t_values": [10, 50], "num_phases": 20}"#,
    );
    let csv = dir.path().join("table1.csv");
    let out = decq(&["table1", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "T,frac_eq,frac_agree");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("10,"));
}

#[test]
fn graph_emits_a_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    let out = decq(&["graph", "--variant", "best-single", "--dot", dot.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["certificate"]["weakly_acyclic"], true);
    assert_eq!(v["nodes"].as_array().unwrap().len(), 16);
    assert!(std::fs::read_to_string(dot).unwrap().starts_with("digraph"));
}

#[test]
fn game_files_round_trip_through_teamgen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("team.json");
    let out = decq(&["teamgen", "--states", "2", "--dms", "3", "--seed", "4", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let out = decq(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = decq(&["graph", "--config", path.to_str().unwrap(), "--variant", "best-multi"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["certificate"]["weakly_acyclic"], true);
}

#[test]
fn solve_prints_q_factors() {
    let out = decq(&["solve", "--dm", "1", "--opponent", "0=1,1"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,u0,u1,best"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn two_table_runs_need_a_tolerance() {
    let out = decq(&["run-alg2", "--phase-length", "10", "--phases", "2", "--start", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = decq(&["run-alg2", "--phase-length", "10", "--phases", "2", "--start", "0", "--delta", "0.05"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().next(), Some("T,seed,start,phase,policy_id,at_equilibrium,agreement"));
    assert_eq!(text.lines().count(), 1 + 3);
}

#[test]
fn coupled_runs_record_agreement() {
    let out = decq(&["run-coupled", "--phase-length", "50", "--phases", "4", "--start", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for line in text.lines().skip(1) {
        let agree = line.rsplit(',').next().unwrap();
        assert!(agree == "0" || agree == "1", "{line}");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["run-alg1", "--phase-length", "100", "--phases", "10", "--seed", "9"];
    let one = decq(&[&args[..], &["--threads", "1"]].concat());
    let two = decq(&[&args[..], &["--threads", "2"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, two.stdout);
}

#[test]
fn full_experiment_configs_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        r#"{
  "game": {"builder": "pd", "gamma": 0.1, "beta": 0.8},
  "t_values": [20], "num_phases": 3, "starts": [0, 15], "seeds_per_start": 1,
  "params": [{"rho": 0.1, "lambda": 0.5, "delta": 0.0, "step_exponent": 0.51, "q_box": null, "reset_mode": "keep"}],
  "master_seed": 5,
  "solver": {"tol": 1e-10, "tie_tol": 1e-9, "cap": 1000000}
}"#,
    );
    let out = decq(&["graph", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["certificate"]["equilibria"], serde_json::json!([5, 15]));
    let bad = write(dir.path(), "bad.json", r#"{"t_values": [10], "bogus": 1}"#);
    let out = decq(&["table1", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
