//! End-to-end tests of the `confgen` binary: exit codes, output schemas,
//! precedence rules, and determinism, all via real process spawns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn confgen() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_confgen"));
    cmd.env_remove("CONFGEN_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    confgen().args(args).output().expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout_str(out)).expect("stdout is JSON")
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().expect("tempdir"),
        }
    }

    fn file(&self, name: &str, content: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, content).expect("write fixture");
        path
    }

    /// The worked two-record calibration file: single down-scored elements
    /// at 0.5 and 0.7, both fully admissible.
    fn two_records(&self) -> PathBuf {
        self.file(
            "two.jsonl",
            concat!(
                "{\"id\":\"a\",\"scores\":[0.5],\"direction\":\"down\",\"adm\":[1.0]}\n",
                "{\"id\":\"b\",\"scores\":[0.7],\"direction\":\"down\",\"adm\":[1.0]}\n",
            ),
        )
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn calibrate_reproduces_the_worked_example() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let out = run(&[
        "calibrate",
        path(&records),
        "--selector",
        "below_lambda",
        "--gamma",
        "0.6",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let json = stdout_json(&out);
    assert_eq!(json["lambda_hat"], 0.7);
    assert!((json["threshold"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert_eq!(json["achieved"], 1.0);
    assert_eq!(json["n"], 2);
    assert_eq!(json["config"]["selector"], "below_lambda");
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn calibrate_at_gamma_zero_prints_the_negative_infinity_literal() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let out = run(&[
        "calibrate",
        path(&records),
        "--selector",
        "below_lambda",
        "--gamma",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["lambda_hat"], "-inf");
}

#[test]
fn unattainable_gamma_exits_three_but_still_reports_abstention() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let out = run(&[
        "calibrate",
        path(&records),
        "--selector",
        "below_lambda",
        "--gamma",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_json(&out)["lambda_hat"], "inf");
    assert!(stderr_str(&out).contains("warning"));
}

#[test]
fn apply_reports_the_stopping_prefix_and_pull_count() {
    let fx = Fixture::new();
    let records = fx.file(
        "seq.jsonl",
        "{\"id\":\"r1\",\"scores\":[0.2,0.5,0.3],\"direction\":\"up\",\"adm\":[0.0,1.0,1.0]}\n",
    );
    let out = run(&["apply", path(&records), "0.4"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout_str(&out),
        "{\"id\":\"r1\",\"indices\":[1,2],\"pulled\":2}\n"
    );
}

#[test]
fn apply_at_infinity_is_maximally_conservative() {
    let fx = Fixture::new();
    let records = fx.file(
        "seq.jsonl",
        "{\"id\":\"r1\",\"scores\":[0.2,0.5,0.3],\"direction\":\"up\",\"adm\":[0.0,1.0,1.0]}\n",
    );
    let out = run(&["apply", path(&records), "inf"]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout_json(&out);
    assert_eq!(line["indices"], serde_json::json!([1, 2, 3]));
    assert_eq!(line["pulled"], 3);
}

#[test]
fn apply_on_an_empty_file_emits_nothing_and_succeeds() {
    let fx = Fixture::new();
    let records = fx.file("empty.jsonl", "");
    let out = run(&["apply", path(&records), "1.0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_str(&out).is_empty());
}

#[test]
fn apply_rejects_direction_mismatch() {
    let fx = Fixture::new();
    let records = fx.two_records(); // down-scored
    let out = run(&["apply", path(&records), "0.5", "--selector", "running_max"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("direction"));
}

#[test]
fn malformed_record_lines_are_reported_with_their_line_number() {
    let fx = Fixture::new();
    let records = fx.file(
        "bad.jsonl",
        concat!(
            "{\"id\":\"a\",\"scores\":[0.5],\"direction\":\"down\",\"adm\":[1.0]}\n",
            "{oops\n",
        ),
    );
    let out = run(&[
        "calibrate",
        path(&records),
        "--selector",
        "below_lambda",
        "--gamma",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains(":2:"), "stderr: {}", stderr_str(&out));
}

#[test]
fn sweep_produces_sorted_csv_with_infinity_literals() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let out = run(&[
        "sweep",
        path(&records),
        path(&records),
        "--selector",
        "below_lambda",
        "--gamma-grid",
        "1,0,0.6",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config: "));
    assert!(lines[1].starts_with("# config_hash: "));
    assert_eq!(
        lines[2],
        "gamma,lambda_hat,mean_test_admissibility,mean_output_size,mean_pulled,n_cal,n_test"
    );
    assert!(lines[3].starts_with("0,-inf,"));
    assert!(lines[4].starts_with("0.6,0.7,1,1,"));
    assert!(lines[5].starts_with("1,inf,"));
}

#[test]
fn simulate_is_byte_deterministic_for_a_fixed_seed() {
    let args = [
        "simulate",
        "--gamma-grid",
        "0.5,0.7",
        "--reps",
        "3",
        "--seed",
        "9",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let text = stdout_str(&first);
    assert!(text.lines().any(|l| l == "# seed: 9"));
    assert!(text
        .lines()
        .any(|l| l.starts_with("gamma,lambda_hat,mean_test_admissibility,se,")));
}

#[test]
fn the_seed_env_var_is_a_fallback_for_the_flag() {
    let flag = run(&["simulate", "--gamma-grid", "0.5", "--reps", "2", "--seed", "33"]);
    let env = confgen()
        .args(["simulate", "--gamma-grid", "0.5", "--reps", "2"])
        .env("CONFGEN_SEED", "33")
        .output()
        .expect("binary runs");
    assert_eq!(flag.stdout, env.stdout);

    let bad = confgen()
        .args(["simulate", "--gamma-grid", "0.5", "--reps", "2"])
        .env("CONFGEN_SEED", "not-a-number")
        .output()
        .expect("binary runs");
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let config = fx.file(
        "conf.json",
        "{\"selector\":\"below_lambda\",\"gamma\":0.1}",
    );
    // Config alone: gamma 0.1 keeps only the 0.5-scored record's level.
    let from_file = run(&[
        "calibrate",
        path(&records),
        "--config",
        path(&config),
    ]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(stdout_json(&from_file)["gamma"], 0.1);
    // The flag wins over the file value.
    let overridden = run(&[
        "calibrate",
        path(&records),
        "--config",
        path(&config),
        "--gamma",
        "0.6",
    ]);
    assert_eq!(stdout_json(&overridden)["gamma"], 0.6);
    assert_eq!(stdout_json(&overridden)["lambda_hat"], 0.7);
}

#[test]
fn unknown_config_keys_and_selectors_are_rejected() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let config = fx.file("conf.json", "{\"selectr\":\"below_lambda\"}");
    let out = run(&["calibrate", path(&records), "--config", path(&config), "--gamma", "0.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["calibrate", path(&records), "--selector", "nope", "--gamma", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("unknown selector"));
}

#[test]
fn calibrated_threshold_round_trips_through_apply() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let cal = run(&[
        "calibrate",
        path(&records),
        "--selector",
        "below_lambda",
        "--gamma",
        "0.6",
    ]);
    let json = stdout_json(&cal);
    let lambda_hat = json["lambda_hat"].as_f64().unwrap().to_string();
    let threshold = json["threshold"].as_f64().unwrap();

    let applied = run(&[
        "apply",
        path(&records),
        &lambda_hat,
        "--selector",
        "below_lambda",
    ]);
    assert_eq!(applied.status.code(), Some(0));
    // Both records carry a single fully admissible element; re-aggregating
    // each output (max over selected values, 0 when empty) must average to
    // at least the inflated threshold.
    let mean: f64 = stdout_str(&applied)
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            if v["indices"].as_array().unwrap().is_empty() {
                0.0
            } else {
                1.0
            }
        })
        .sum::<f64>()
        / 2.0;
    assert!(mean >= threshold, "round-trip mean {mean} < {threshold}");
}

#[test]
fn forest_sweep_reads_matrices_and_flags_majority_size() {
    let fx = Fixture::new();
    let all_correct = "{\"correct\":[1,1,1]}\n".repeat(6);
    let cal = fx.file("cal.jsonl", &all_correct);
    let test = fx.file("test.jsonl", &all_correct);
    let out = run(&[
        "sweep",
        path(&cal),
        path(&test),
        "--forest",
        "--k",
        "1",
        "--gamma-grid",
        "0.5,0.8",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let text = stdout_str(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[2].ends_with(",majority_meaningful"));
    // Every tree is always correct, so one tree suffices at any level.
    assert!(lines[3].starts_with("0.5,-inf,1,1,"));
    assert!(lines[3].ends_with(",true"));

    let missing_k = run(&[
        "sweep",
        path(&cal),
        path(&test),
        "--forest",
        "--gamma-grid",
        "0.5",
    ]);
    assert_eq!(missing_k.status.code(), Some(2));
}

#[test]
fn out_flag_writes_the_document_to_a_file() {
    let fx = Fixture::new();
    let records = fx.two_records();
    let target = fx.dir.path().join("result.json");
    let out = run(&[
        "calibrate",
        path(&records),
        "--selector",
        "below_lambda",
        "--gamma",
        "0.6",
        "--out",
        path(&target),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_str(&out).is_empty());
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(written["lambda_hat"], 0.7);
}
