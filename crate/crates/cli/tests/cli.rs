//! Black-box tests of the `mmflow` binary: exit codes, artifact shape, and
//! scenario validation errors.

use std::path::{Path, PathBuf};

use assert_cmd::Command;
use predicates::prelude::*;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn mmflow() -> Command {
    Command::cargo_bin("mmflow").unwrap()
}

#[test]
fn quadratic_run_writes_monotone_trajectory() {
    let out = tempfile::tempdir().unwrap();
    mmflow()
        .args(["run", "--scenario"])
        .arg(scenario("quadratic_run.json"))
        .arg("--out")
        .arg(out.path())
        .arg("--quiet")
        .assert()
        .success();
    let csv = std::fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    let energies: Vec<f64> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(energies.len() > 2);
    assert!(energies.last().unwrap() <= energies.first().unwrap());
    // preamble embeds schema version and the resolved scenario
    assert!(csv.starts_with("# schema_version: 1\n# scenario: {"));
    assert!(csv.contains("t,energy,envelope,slope,speed,edi_residual,state_0,state_1"));
}

#[test]
fn heat_flow_summary_reports_variance_rate_two() {
    let out = tempfile::tempdir().unwrap();
    mmflow()
        .args(["run", "--scenario"])
        .arg(scenario("heat_flow.json"))
        .arg("--out")
        .arg(out.path())
        .arg("--quiet")
        .assert()
        .success();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap())
            .unwrap();
    let rate = summary["result"]["variance_rate"].as_f64().unwrap();
    assert!((rate - 2.0).abs() < 0.1, "variance rate {rate}");
    assert_eq!(summary["schema_version"], 1);
    assert!(summary["scenario"]["flow"]["tau"].is_number());
}

#[test]
fn missing_p_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{
            "backend": {"kind": "banach", "dim": 1,
                        "functional": {"kind": "quadratic", "lambda": 1.0, "center": [0.0]},
                        "initial": [1.0]},
            "flow": {"tau": 0.1, "horizon": 1.0},
            "experiment": {"kind": "run"}
        }"#,
    )
    .unwrap();
    mmflow()
        .args(["run", "--scenario"])
        .arg(&bad)
        .assert()
        .code(2)
        .stderr(predicate::str::contains("p"));
}

#[test]
fn unparseable_json_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    mmflow()
        .args(["run", "--scenario"])
        .arg(&bad)
        .assert()
        .code(2)
        .stderr(predicate::str::contains("line"));
}

#[test]
fn subcommand_must_match_experiment_kind() {
    mmflow()
        .args(["decay", "--scenario"])
        .arg(scenario("quadratic_run.json"))
        .assert()
        .code(2)
        .stderr(predicate::str::contains("does not match"));
}

#[test]
fn double_well_key_estimate_is_refused_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("dw_check.json");
    std::fs::write(
        &sc,
        r#"{
            "backend": {"kind": "banach", "dim": 1,
                        "functional": {"kind": "double_well"},
                        "initial": [0.5]},
            "flow": {"p": 2.0, "tau": 0.1, "horizon": 1.0},
            "experiment": {"kind": "check", "edi": false, "energy_solution": false,
                           "lyapunov": false, "key_estimate": true}
        }"#,
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    mmflow()
        .args(["check", "--scenario"])
        .arg(&sc)
        .arg("--out")
        .arg(out.path())
        .assert()
        .code(4)
        .stdout(predicate::str::contains("check key_estimate: FAIL"));
}

#[test]
fn all_checks_pass_on_the_quadratic_scenario() {
    let out = tempfile::tempdir().unwrap();
    mmflow()
        .args(["check", "--scenario"])
        .arg(scenario("quadratic_check.json"))
        .arg("--out")
        .arg(out.path())
        .arg("--quiet")
        .assert()
        .success();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["result"]["all_pass"], true);
    assert_eq!(report["result"]["checks"].as_array().unwrap().len(), 4);
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let out = tempfile::tempdir().unwrap();
    mmflow()
        .args(["run", "--scenario"])
        .arg(scenario("quadratic_run.json"))
        .arg("--out")
        .arg(out.path())
        .args(["--seed", "99", "--quiet"])
        .assert()
        .success();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["scenario"]["flow"]["seed"], 99);
}

#[test]
fn refine_reports_first_order_sup_distances() {
    let out = tempfile::tempdir().unwrap();
    mmflow()
        .args(["refine", "--scenario"])
        .arg(scenario("quadratic_refine.json"))
        .arg("--out")
        .arg(out.path())
        .arg("--quiet")
        .assert()
        .success();
    let csv = std::fs::read_to_string(out.path().join("study.csv")).unwrap();
    let sups: Vec<f64> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("tau,"))
        .filter_map(|l| l.split(',').nth(1).unwrap().parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .collect();
    assert!(sups.len() >= 2);
    for w in sups.windows(2) {
        // per-level sup distance roughly halves for the first-order scheme
        assert!(w[1] < 0.7 * w[0], "sup distances not shrinking: {w:?}");
    }
}
