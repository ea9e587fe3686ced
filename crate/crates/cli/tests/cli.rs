use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_querytree")).args(args).output().expect("spawn querytree")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TOY: &str = r#"{"queries":["q_1","q_2","q_3"],"objects":[
    {"prior":0.25,"group":1,"responses":[0,1,1]},
    {"prior":0.25,"group":1,"responses":[1,1,0]},
    {"prior":0.25,"group":1,"responses":[0,1,0]},
    {"prior":0.25,"group":2,"responses":[1,0,0]}]}"#;

#[test]
fn toy_build_cost_and_oracle_agree() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("toy.json");
    let tree = dir.path().join("tree.json");
    std::fs::write(&inst, TOY).unwrap();

    let built = json(&["build", "--instance", p(&inst), "--mode", "group", "--tree-out", p(&tree)]);
    assert_eq!(built["cost"], 1.0);
    assert_eq!(built["tree"]["root"]["query"], 1);

    let costs = json(&["cost", "--instance", p(&inst), "--tree", p(&tree), "--mode", "group", "--lambdas", "1,2"]);
    for row in costs.as_array().unwrap() {
        assert!((row["cost"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((row["cost_decomposed"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }

    let opt = json(&["oracle", "--instance", p(&inst), "--mode", "group", "--lambda", "2"]);
    assert!((opt["cost"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let gbs = json(&["build", "--instance", p(&inst)]);
    assert_eq!(gbs["tree"]["root"]["query"], 0);
    assert_eq!(gbs["cost"], 2.0);
}

#[test]
fn generate_formats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    ok(&["gen", "classifiers", "--thresholds", "3", "--out", p(&csv)]);
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("name,group,prior,"));

    let rnd = dir.path().join("r.json");
    ok(&["gen", "random", "--objects", "7", "--queries", "9", "--seed", "4", "--groups", "3", "-o", p(&rnd)]);
    let zipf = json(&["gen", "zipf", "--instance", p(&rnd), "--beta", "2", "--seed", "1"]);
    let objects = zipf["objects"].as_array().unwrap();
    assert_eq!(objects.len(), 7);
    let total: f64 = objects.iter().map(|o| o["prior"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);

    // the built tree over a CSV instance equals the one over its JSON copy
    let from_csv = json(&["build", "--instance", p(&csv), "--lambda", "2"]);
    let copy = dir.path().join("c.json");
    std::fs::write(&copy, ok(&["gen", "classifiers", "--thresholds", "3"])).unwrap();
    let from_json = json(&["build", "--instance", p(&copy), "--lambda", "2"]);
    assert_eq!(from_csv["tree"], from_json["tree"]);
}

#[test]
fn sweep_writes_csv_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let args = ["sweep", "--gen", "classifiers:3", "--beta", "1", "--reps", "4", "--lambdas", "2,inf", "--seed", "9"];
    ok(&[&args[..], &["--out", p(&out)]].concat());
    let written = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = written.lines().collect();
    assert_eq!(lines[0], "algorithm,lambda,mean_cost,std_cost,repetitions,failures");
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines.iter().any(|l| l.starts_with("gbs-uniform,inf,")));

    let sequential = ok(&[&["--sequential"], &args[..]].concat());
    assert_eq!(sequential, written);
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = run(&["build", "--instance", p(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    assert!(!run(&["sweep", "--gen", "classifiers:2", "--algorithms", "nope"]).status.success());
    assert!(!run(&["build", "--instance", p(&missing), "--lambda", "0.5"]).status.success());
    assert!(!run(&["sweep", "--gen", "bogus:1"]).status.success());
    let random = ok(&["sweep", "--gen", "random:6x8:3", "--reps", "2", "--lambdas", "2"]);
    assert_eq!(random.lines().count(), 4);
}
