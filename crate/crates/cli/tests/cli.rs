use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dmlfair(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmlfair"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = dmlfair(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const BASE: &str = "age=18,gender=male,race=white";

fn simulate(dir: &Path) {
    ok(
        dir,
        &[
            "simulate", "--n", "1200", "--seed", "5", "--out", "d.csv", "--latent", "l.csv", "--schema-out",
            "s.json", "--split", "800",
        ],
    );
}

fn train_forest(dir: &Path, model: &str, threads: &str) {
    ok(
        dir,
        &[
            "--threads", threads, "train", "--data", "d_train.csv", "--schema", "s.json", "--trees", "40",
            "--folds", "4", "--base", BASE, "--seed", "9", "--model", model, "--lambda", "0.3",
        ],
    );
}

#[test]
fn end_to_end_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    for f in ["d_train.csv", "d_test.csv", "l_train.csv", "l_test.csv", "d.csv.manifest.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let sim_manifest = read_json(&dir.join("d.csv.manifest.json"));
    assert_eq!(sim_manifest["details"]["simulation"]["n"], 1200);
    assert_eq!(sim_manifest["details"]["simulation"]["sd_rating"], 10.0);

    train_forest(dir, "m.bin", "2");
    ok(dir, &["predict", "--model", "m.bin", "--data", "d_test.csv", "--out", "p.csv"]);
    let preds = std::fs::read_to_string(dir.join("p.csv")).unwrap();
    assert_eq!(preds.lines().count(), 401);
    assert!(preds.starts_with("row,prediction\n"));

    ok(
        dir,
        &[
            "evaluate", "--model", "m.bin", "--data", "d_test.csv", "--latent", "l_test.csv", "--compare-unaware",
            "--compare-regularized", "--subgroup", "race!=white|gender!=male", "--groups", "gender,gender*race",
            "--bootstrap", "100", "--report", "r.json", "--tables", "t", "--plots", "pl",
        ],
    );
    let report = read_json(&dir.join("r.json"));
    let models: Vec<&str> = report["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["model"].as_str().unwrap())
        .collect();
    assert_eq!(models, ["dml_fair", "unaware", "regularized"]);
    let fair = report["models"][0]["cf_errors"][0]["mean"].as_f64().unwrap();
    let unaware = report["models"][1]["cf_errors"][0]["mean"].as_f64().unwrap();
    assert!(fair.abs() < unaware.abs(), "fair {fair} unaware {unaware}");
    assert!(report["models"][0]["cf_errors"][0]["mean_ci"]["lower"].is_number());
    for f in ["t/group_stats.csv", "t/cf_errors.csv", "pl/cf_error_hist.csv", "pl/prediction_hist.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let svg = std::fs::read_to_string(dir.join("pl/cf_error_racenewhiteogendernemale.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let out = ok(
        dir,
        &["explain", "--model", "m.bin", "--data", "d_test.csv", "--by", "gender", "--max-depth", "2", "--out", "e.json"],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("# male"));
    let e = read_json(&dir.join("e.json"));
    assert_eq!(e["trees"].as_array().unwrap().len(), 3);
}

#[test]
fn manifest_replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    train_forest(dir, "m.bin", "1");
    ok(dir, &["train", "--config", "m.bin.manifest.json", "--model", "m2.bin"]);
    assert_eq!(std::fs::read(dir.join("m.bin")).unwrap(), std::fs::read(dir.join("m2.bin")).unwrap());

    ok(
        dir,
        &[
            "evaluate", "--model", "m.bin", "--data", "d_test.csv", "--latent", "l_test.csv", "--compare-unaware",
            "--bootstrap", "100", "--report", "r.json",
        ],
    );
    ok(dir, &["evaluate", "--config", "r.json.manifest.json", "--report", "r2.json"]);
    assert_eq!(std::fs::read(dir.join("r.json")).unwrap(), std::fs::read(dir.join("r2.json")).unwrap());

    // A manifest from another subcommand is rejected.
    let out = dmlfair(dir, &["predict", "--config", "m.bin.manifest.json", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_the_model() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    train_forest(dir, "a.bin", "1");
    train_forest(dir, "b.bin", "4");
    assert_eq!(std::fs::read(dir.join("a.bin")).unwrap(), std::fs::read(dir.join("b.bin")).unwrap());
}

#[test]
fn config_file_supplies_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    std::fs::write(
        dir.join("train.json"),
        format!(
            r#"{{"data": "d_train.csv", "schema": "s.json", "learner": "linear", "folds": 3, "base": "{BASE}", "model": "wrong.bin"}}"#
        ),
    )
    .unwrap();
    ok(dir, &["train", "--config", "train.json", "--model", "lin.bin"]);
    assert!(dir.join("lin.bin").exists());
    assert!(!dir.join("wrong.bin").exists());
    let m = read_json(&dir.join("lin.bin.manifest.json"));
    assert_eq!(m["config"]["model"], "lin.bin");
    assert_eq!(m["config"]["folds"], 3);

    std::fs::write(dir.join("bad.json"), r#"{"fodls": 3}"#).unwrap();
    let out = dmlfair(dir, &["train", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    assert_eq!(dmlfair(dir, &["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(dmlfair(dir, &["train", "--data", "d_train.csv"]).status.code(), Some(2));

    // Schema mismatch: the outcome column does not exist.
    let out = dmlfair(
        dir,
        &[
            "train", "--data", "d_train.csv", "--sensitive", "age,gender,race", "--outcome", "score", "--base", BASE,
            "--model", "x.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("score"));

    // A cell that fails to parse names its row and column.
    let csv = std::fs::read_to_string(dir.join("d_train.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_string).collect();
    let cols: Vec<&str> = lines[0].split(',').collect();
    let grade = cols.iter().position(|c| *c == "grade").unwrap();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    cells[grade] = "oops".into();
    lines[3] = cells.join(",");
    std::fs::write(dir.join("bad.csv"), lines.join("\n") + "\n").unwrap();
    let out = dmlfair(
        dir,
        &["train", "--data", "bad.csv", "--schema", "s.json", "--learner", "linear", "--base", BASE, "--model", "x.bin"],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3") && err.contains("grade"), "{err}");

    // Numerical failure: a predictor duplicated under another name.
    let dup: Vec<String> = csv
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let v: Vec<&str> = l.split(',').collect();
            if i == 0 {
                format!("{l},grade2")
            } else {
                format!("{l},{}", v[grade])
            }
        })
        .collect();
    std::fs::write(dir.join("dup.csv"), dup.join("\n") + "\n").unwrap();
    let out = dmlfair(
        dir,
        &[
            "train", "--data", "dup.csv", "--sensitive", "age,gender,race", "--outcome", "rating", "--learner", "linear",
            "--base", BASE, "--model", "x.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.join("x.bin").exists());

    // A latent file that does not belong to the data.
    ok(
        dir,
        &["train", "--data", "d_train.csv", "--schema", "s.json", "--learner", "linear", "--base", BASE, "--model", "lin.bin"],
    );
    let out = dmlfair(
        dir,
        &["evaluate", "--model", "lin.bin", "--data", "d_test.csv", "--latent", "l_train.csv", "--report", "r.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("r.json").exists());
}
