//! End-to-end tests against the compiled binary: report contents, file
//! handling, exit codes, and determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polybell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polybell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report_of(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let full: Value = serde_json::from_slice(&output.stdout).expect("stdout is a json report");
    full["report"].clone()
}

fn assert_close(value: &Value, expected: f64, tol: f64) {
    let got = value
        .as_f64()
        .unwrap_or_else(|| panic!("not a number: {value}"));
    assert!(
        (got - expected).abs() <= tol,
        "got {got}, expected {expected}"
    );
}

#[test]
fn repeater_report_scores_and_bound() {
    let out = polybell(&["repeater", "--n", "2"]);
    let report = report_of(&out);
    assert_close(
        &report["repeater_score"]["score"],
        std::f64::consts::SQRT_2,
        1e-9,
    );
    let bound = &report["bounds"][0];
    assert_eq!(bound["formula"], "repeater");
    assert_close(
        &bound["value"],
        2.0 * (2.0 - std::f64::consts::SQRT_2),
        1e-9,
    );
    assert_eq!(bound["vacuous"], Value::Bool(true));
    assert_eq!(report["dag_violations"], Value::Array(vec![]));
}

#[test]
fn repeater_visibility_regime_flags() {
    let out = polybell(&["repeater", "--n", "3", "--visibility", "0.6,1,1"]);
    let report = report_of(&out);
    assert_close(&report["repeater_score"]["score"], 1.2f64.sqrt(), 1e-9);
    let vis = &report["visibility"];
    assert_eq!(vis["polynomial_violable"], Value::Bool(true));
    assert_eq!(vis["chsh_violable"], Value::Bool(false));
    assert_eq!(vis["intermediate_regime"], Value::Bool(true));
}

#[test]
fn star_report_with_correlated_bound() {
    let out = polybell(&["star", "--n", "2", "--k", "8", "--m", "2", "--q", "2"]);
    let report = report_of(&out);
    let s = 8.0 * (std::f64::consts::PI / 16.0).cos();
    assert_close(&report["star_score"]["score"], s, 1e-9);
    assert_close(&report["bounds"][0]["value"], 2.0 * (8.0 - s), 1e-9);
    assert_eq!(report["bounds"][1]["formula"], "star-correlated");
    assert_close(&report["bounds"][1]["value"], 4.0 * (8.0 - s), 1e-9);
}

#[test]
fn usage_errors_exit_two() {
    let out = polybell(&["repeater", "--n", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // q must stay below the setting count.
    let out = polybell(&["star", "--n", "2", "--k", "2", "--q", "2"]);
    assert_eq!(out.status.code(), Some(2));

    // Missing required flag is a clap usage error.
    let out = polybell(&["attack"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_output_file_on_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = polybell(&["repeater", "--n", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!path.exists(), "partial output left behind");
}

#[test]
fn attack_report_transcript_and_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("rounds.csv");
    let behavior = dir.path().join("behavior.json");
    let report_path = dir.path().join("report.json");
    let out = polybell(&[
        "attack",
        "--n",
        "2",
        "--rounds",
        "10000",
        "--seed",
        "7",
        "--transcript",
        transcript.to_str().unwrap(),
        "--emit-behavior",
        behavior.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let full: Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let report = &full["report"];
    assert_eq!(report["attack"]["matches_quantum_table"], Value::Bool(true));
    assert_close(&report["attack"]["guess_probability"], 1.0, 0.0);
    assert_eq!(report["attack"]["undetectable"], Value::Bool(true));
    assert_close(
        &report["repeater_score"]["score"],
        std::f64::consts::SQRT_2,
        1e-9,
    );
    // Perfect inference coexists with a vacuous bound: the attack breaks the
    // independent-sources assumption the bound is conditioned on.
    assert_eq!(report["bounds"][0]["vacuous"], Value::Bool(true));

    let lines = std::fs::read_to_string(&transcript).unwrap();
    assert_eq!(lines.lines().count(), 10_001); // header + rounds

    // The emitted behavior round-trips and rescores identically.
    let loaded = polybell::Behavior::load(Path::new(&behavior)).unwrap();
    let score = polybell::inequality::eval_repeater(&loaded).unwrap().score;
    assert!((score - std::f64::consts::SQRT_2).abs() < 1e-12);
}

#[test]
fn attack_without_rounds_skips_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("rounds.csv");
    let out = polybell(&[
        "attack",
        "--n",
        "4",
        "--rounds",
        "0",
        "--transcript",
        transcript.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(!transcript.exists());
    let report = report_of(&out);
    assert_eq!(report["attack"]["guess_probability"], Value::Null);
    assert_eq!(report["attack"]["matches_quantum_table"], Value::Bool(true));
}

#[test]
fn lhv_search_modes() {
    let out = polybell(&[
        "lhv-search",
        "--network",
        "repeater",
        "--n",
        "2",
        "--mode",
        "exhaustive",
        "--cardinality",
        "2",
    ]);
    let report = report_of(&out);
    assert_close(&report["best"], 1.0, 0.0);
    assert!(report["argmax"]["responses"].is_array());

    let args = [
        "lhv-search",
        "--network",
        "star",
        "--n",
        "2",
        "--k",
        "2",
        "--mode",
        "random",
        "--seed",
        "42",
        "--iterations",
        "2000",
    ];
    let first = polybell(&args);
    let report = report_of(&first);
    assert!(report["best"].as_f64().unwrap() <= 1.0 + 1e-9);
    // Seeded runs are reproducible byte-for-byte in the diffable section.
    let second = polybell(&args);
    assert_eq!(report_of(&first), report_of(&second));
}

#[test]
fn lhv_search_budget_exit_code() {
    let out = polybell(&[
        "lhv-search",
        "--network",
        "repeater",
        "--n",
        "2",
        "--mode",
        "exhaustive",
        "--cardinality",
        "4",
        "--budget",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("budget 10"), "stderr: {stderr}");
}

#[test]
fn check_dag_round_trip_and_violations() {
    let dir = tempfile::tempdir().unwrap();
    let behavior = dir.path().join("behavior.json");
    let out = polybell(&[
        "star",
        "--n",
        "2",
        "--k",
        "2",
        "--emit-behavior",
        behavior.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = polybell(&[
        "check-dag",
        "--behavior",
        behavior.to_str().unwrap(),
        "--network",
        "star",
        "--n",
        "2",
        "--k",
        "2",
    ]);
    let report = report_of(&out);
    assert_eq!(report["violations"], Value::Array(vec![]));

    // A signalling table gets listed.
    let bad = dir.path().join("signalling.json");
    let signalling =
        polybell::Behavior::from_fn(vec![polybell::AgentShape::new(2, 2); 2], |x, o| {
            if o[0] == x[1] && o[1] == 0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
    signalling.save(&bad).unwrap();
    let out = polybell(&[
        "check-dag",
        "--behavior",
        bad.to_str().unwrap(),
        "--network",
        "bell",
        "--k",
        "2",
    ]);
    let report = report_of(&out);
    let violations = report["violations"].as_array().unwrap();
    assert_eq!(violations.len(), 1);
    assert_close(&violations[0]["deviation"], 1.0, 1e-12);

    // Malformed files are parse failures.
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{not json").unwrap();
    let out = polybell(&[
        "check-dag",
        "--behavior",
        broken.to_str().unwrap(),
        "--network",
        "bell",
        "--k",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reports_are_deterministic_outside_timestamp() {
    let run = || {
        let out = polybell(&["repeater", "--n", "2", "--visibility", "0.9,0.8"]);
        assert!(out.status.success());
        let mut full: Value = serde_json::from_slice(&out.stdout).unwrap();
        full.as_object_mut().unwrap().remove("generated_at");
        serde_json::to_string(&full).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn csv_format_flattens_report_keys() {
    let out = polybell(&["repeater", "--n", "2", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.contains("report.repeater_score.score,"));
    assert!(text.contains("report.bounds[0].formula,\"repeater\""));
    // The CSV view has no timestamp row at all.
    assert!(!text.contains("generated_at"));
}
