use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hetero_core::data::write_csv;
use hetero_core::simlab::{simulate, DgpConfig};
use serde_json::Value;
use tempfile::TempDir;

fn hetero(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetero")).args(args).output().expect("spawn hetero")
}

fn dataset(dir: &Path, setting: u8, n: usize, seed: u64) -> PathBuf {
    let sample = simulate(&DgpConfig::new(setting, n, seed)).unwrap();
    let path = dir.join(format!("s{setting}_{n}_{seed}.csv"));
    write_csv(&sample, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema_validate(report: &Value) {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/report.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

#[test]
fn test_quant_emits_valid_report() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 3, 300, 7);
    let out = hetero(&["test-quant", "--data", data.to_str().unwrap(), "--modifier", "x3", "--bootstrap", "200", "--seed", "4"]);
    let report = stdout_json(&out);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report["test"], "quantitative");
    assert_eq!(report["n"], 300);
    assert_eq!(report["rule_label"], "test-optimal rule");
    assert_eq!(report["draws"].as_array().unwrap().len(), 200);
    let p = report["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    schema_validate(&report);
}

#[test]
fn every_class_validates_against_schema() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 4, 200, 2);
    let d = data.to_str().unwrap();
    for (class, modifier) in [("threshold", "x3"), ("linear", "x1,x3"), ("bv", "x3"), ("tree", "x2,x3")] {
        for cmd in ["test-quant", "test-qual"] {
            let out = hetero(&[cmd, "--data", d, "--modifier", modifier, "--class", class, "--bootstrap", "50"]);
            schema_validate(&stdout_json(&out));
        }
    }
    let out = hetero(&["test-quant", "--data", d, "--modifier", "x3", "--variance-weighted", "--bootstrap", "50"]);
    let report = stdout_json(&out);
    assert!(report["weighting"].is_object());
    schema_validate(&report);
}

#[test]
fn test_qual_echoes_inputs() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 2, 250, 1);
    let out = hetero(&[
        "test-qual", "--data", data.to_str().unwrap(), "--modifier", "x3", "--delta", "0.25", "--alpha", "0.1",
        "--bootstrap", "120", "--seed", "11",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["test"], "qualitative");
    assert_eq!(report["delta"], 0.25);
    assert_eq!(report["alpha"], 0.1);
    assert_eq!(report["bootstrap"], 120);
    assert_eq!(report["seed"], 11);
    assert_eq!(report["draws_plus"].as_array().unwrap().len(), 120);
    schema_validate(&report);
}

#[test]
fn huge_delta_is_not_rejected() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 5, 300, 3);
    let out = hetero(&["test-qual", "--data", data.to_str().unwrap(), "--modifier", "x3", "--delta", "1e6", "--bootstrap", "100"]);
    let report = stdout_json(&out);
    assert_eq!(report["reject"], false);
    assert_eq!(report["reject_plus"], false);
}

#[test]
fn missing_column_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 1, 50, 0);
    let out = hetero(&["test-quant", "--data", data.to_str().unwrap(), "--modifier", "age"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("age"));
}

#[test]
fn missing_data_flag_is_a_usage_error() {
    let out = hetero(&["test-quant", "--modifier", "x3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_setting_is_a_usage_error() {
    let out = hetero(&["simulate", "--settings", "9", "--n", "100", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_single_cell_writes_csv_and_json() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("study.csv");
    let args = [
        "simulate", "--settings", "1", "--n", "200", "--reps", "2", "--bootstrap", "50", "--methods", "quant_monotone",
        "--seed", "5", "--out", path.to_str().unwrap(),
    ];
    let out = hetero(&args);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "method,setting,n,R,proportion,mcse,seconds");
    assert!(lines[1].starts_with("Quant (Monotone),1,200,2,"));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
    schema_validate(&json);
    assert_eq!(json["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn curve_writes_grid_rows() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 3, 300, 9);
    let out = hetero(&["curve", "--data", data.to_str().unwrap(), "--modifier", "x3"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x3,fit,se,lower,upper");
    assert_eq!(lines.len(), 201);
    for line in &lines[1..] {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[3] <= v[1] && v[1] <= v[4]);
    }
}

#[test]
fn curve_rejects_two_modifiers() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 3, 100, 9);
    let out = hetero(&["curve", "--data", data.to_str().unwrap(), "--modifier", "x1,x3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("curve requires scalar modifier"));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 2, 200, 4);
    let config = dir.path().join("run.json");
    let body = serde_json::json!({
        "data": data, "modifier": ["x3"], "alpha": 0.2, "bootstrap": 80, "seed": 3, "class": "bv", "lambda": 1.5, "grid": 20
    });
    std::fs::write(&config, body.to_string()).unwrap();
    let out = hetero(&["test-quant", "--config", config.to_str().unwrap(), "--seed", "9"]);
    let report = stdout_json(&out);
    assert_eq!(report["alpha"], 0.2);
    assert_eq!(report["bootstrap"], 80);
    assert_eq!(report["seed"], 9);
    assert_eq!(report["class"]["kind"], "bounded_variation");
    assert_eq!(report["class"]["lambda"], 1.5);

    std::fs::write(&config, r#"{"bogus": 1}"#).unwrap();
    let out = hetero(&["test-quant", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path(), 4, 250, 8);
    let args = ["test-qual", "--data", data.to_str().unwrap(), "--modifier", "x3", "--bootstrap", "150", "--seed", "21"];
    let a = hetero(&args);
    let b = hetero(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "1"]);
    assert_eq!(hetero(&threaded).stdout, a.stdout);
}
