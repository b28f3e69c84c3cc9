mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use knockoff_mem::datagen::Setting;
use knockoff_mem::harness::screen::write_data_csv;
use serde_json::Value;

use common::small_dataset;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knockoff-mem")).args(args).output().expect("binary runs")
}

fn quick_simulation(json: &Path) -> Output {
    cli(&[
        "simulate", "--setting", "3", "--seed", "17", "--n", "200", "--p", "24", "--replicates", "2", "--k", "2", "--sweeps", "3",
        "--cv-folds", "3", "--statistic", "lasso,gmus", "--threads", "1", "--out-json", json.to_str().unwrap(),
    ])
}

fn write_data(dir: &Path, setting: Setting) -> std::path::PathBuf {
    let (data, _) = small_dataset(setting, 200, 24, 3);
    let path = dir.join("data.csv");
    write_data_csv(fs::File::create(&path).unwrap(), &data[0], "y").unwrap();
    path
}

#[test]
fn simulate_requires_a_seed() {
    let out = cli(&["simulate", "--setting", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn simulate_is_reproducible_to_the_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let first = quick_simulation(&a);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(quick_simulation(&b).status.success());
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert_eq!(a, b);

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["config"]["seed"], 17);
    assert_eq!(report["methods"].as_array().unwrap().len(), 2);
    assert_eq!(report["replicates"].as_array().unwrap().len(), 4);
    let table = String::from_utf8_lossy(&first.stdout);
    assert!(table.contains("lasso_coef") && table.contains("gmus"));
}

#[test]
fn config_files_override_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 150, "replicates": 1, "statistics": ["lasso_order"]}"#).unwrap();
    let json = dir.path().join("out.json");
    let out = cli(&[
        "simulate", "--setting", "1", "--seed", "3", "--p", "24", "--n", "999", "--cv-folds", "3", "--k", "2", "--config",
        cfg.to_str().unwrap(), "--out-json", json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&fs::read(json).unwrap()).unwrap();
    assert_eq!(report["config"]["n"], 150);
    assert_eq!(report["config"]["p"], 24);
    assert_eq!(report["config"]["statistics"][0], "lasso_order");
}

#[test]
fn bad_configuration_exits_with_code_2() {
    let out = cli(&["simulate", "--setting", "9", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["simulate", "--setting", "1", "--seed", "1", "--q", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn screen_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), Setting::MissingOnly);
    let (json, csv) = (dir.path().join("s.json"), dir.path().join("s.csv"));
    let out = cli(&[
        "screen", "--data", data.to_str().unwrap(), "--outcome", "y", "--seed", "2", "--k", "2", "--cv-folds", "3",
        "--out-json", json.to_str().unwrap(), "--out-csv", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&fs::read(json).unwrap()).unwrap();
    assert_eq!(report["family"], "binomial");
    assert_eq!(report["names"].as_array().unwrap().len(), 24);
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 25);
}

#[test]
fn screen_rejects_malformed_data_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "y,a,b\n1,0.5,oops\n0,1,2\n").unwrap();
    let out = cli(&["screen", "--data", path.to_str().unwrap(), "--outcome", "y"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn error_aware_screening_needs_qc() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), Setting::Both);
    let out = cli(&["screen", "--data", data.to_str().unwrap(), "--outcome", "y", "--statistic", "gmus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn screen_multi_needs_two_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), Setting::MissingOnly);
    let out = cli(&["screen-multi", "--data", data.to_str().unwrap(), "--outcome", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn error_cov_and_impute_export() {
    let dir = tempfile::tempdir().unwrap();
    let qc = dir.path().join("qc.csv");
    fs::write(&qc, "a,b\n1.0,2.0\n1.2,2.1\n0.9,1.8\n1.1,2.3\n").unwrap();
    let out = cli(&["error-cov", "--qc", qc.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("feature,a,b"));
    assert_eq!(text.lines().count(), 3);

    let data = write_data(dir.path(), Setting::MissingOnly);
    let out = cli(&["impute", "--data", data.to_str().unwrap(), "--outcome", "y", "--k", "3", "--sweeps", "2", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("imputation,y,"));
    assert_eq!(text.lines().count(), 1 + 3 * 200);
    assert!(!text.contains("NA"));
}
