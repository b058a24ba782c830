use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn dynwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynwatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is json");
    v["error"].as_str().unwrap().to_string()
}

fn simulate_case14(dir: &Path, seed: &str) -> Value {
    let case = data("case14.m");
    json(&dynwatch(&[
        "simulate",
        "--case",
        case.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--topologies",
        "4",
        "--ticks-per",
        "25",
        "--anomalies",
        "8",
        "--seed",
        seed,
    ]))
}

#[test]
fn simulate_detect_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("run");
    let sim = simulate_case14(&bundle, "3");
    assert_eq!(sim["ticks"], 100);
    assert_eq!(sim["anomalies"], 8);
    assert_eq!(sim["sensors"], 14);

    let scores = tmp.path().join("scores.jsonl");
    let out = dynwatch(&["detect", "--scenario", bundle.to_str().unwrap(), "--out", scores.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&scores).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 100);
    assert_eq!(lines[0]["tick"], 1);
    assert_eq!(lines[0]["warmup"], true);
    assert_eq!(lines[10]["warmup"], false);
    assert!(lines[10]["top"].as_array().unwrap().len() <= 5);

    let report = json(&dynwatch(&[
        "evaluate",
        "--scores",
        scores.to_str().unwrap(),
        "--labels",
        bundle.join("labels.csv").to_str().unwrap(),
        "--top-k",
        "8",
    ]));
    assert_eq!(report["ticks"], 100);
    assert_eq!(report["positives"], 8);
    let auc = report["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["top_k"].is_object());
}

#[test]
fn alarm_mode_marks_ticks() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("run");
    simulate_case14(&bundle, "4");
    let scores = tmp.path().join("scores.jsonl");
    let out = dynwatch(&[
        "detect",
        "--scenario",
        bundle.to_str().unwrap(),
        "--out",
        scores.to_str().unwrap(),
        "--tau",
        "5",
        "--measure",
        "ged",
        "--uniform",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&scores).unwrap();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        if v["warmup"] == false {
            assert_eq!(v["alarm"].as_bool().unwrap(), v["score"].as_f64().unwrap() > 5.0, "{v}");
        }
    }
}

#[test]
fn lodf_on_the_triangle() {
    let case = data("triangle.m");
    let v = json(&dynwatch(&["lodf", "--case", case.to_str().unwrap(), "--outage", "0"]));
    assert_eq!(v["bridge"], false);
    let lodf: Vec<f64> = v["lodf"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (got, want) in lodf.iter().zip([-1.0, 1.0, 1.0]) {
        assert!((got - want).abs() < 1e-12, "{lodf:?}");
    }

    // with branch 1 out, branch 0 and 2 are both bridges
    let v = json(&dynwatch(&["lodf", "--case", case.to_str().unwrap(), "--inactive", "1"]));
    assert_eq!(v["branches"], 3);
    assert_eq!(v["bridges"], serde_json::json!([0, 2]));
}

#[test]
fn distance_between_triangle_topologies() {
    let case = data("triangle.m");
    let case = case.to_str().unwrap();
    let v = json(&dynwatch(&["distance", "--case", case, "--a", "", "--b", "0", "--measure", "ged"]));
    assert_eq!(v["measure"], "ged");
    assert_eq!(v["distance"], 1.0);
    let v = json(&dynwatch(&["distance", "--case", case, "--b", "0"]));
    assert!((v["distance"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12, "{v}");
    let v = json(&dynwatch(&["distance", "--case", case, "--a", "1", "--b", "1"]));
    assert_eq!(v["distance"], 0.0);
}

#[test]
fn small_bench() {
    let case = data("case14.m");
    let v = json(&dynwatch(&[
        "bench",
        "--case",
        case.to_str().unwrap(),
        "--factors",
        "1,2",
        "--topologies",
        "3",
        "--ticks-per",
        "20",
        "--repeats",
        "1",
    ]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["edges"], 20);
    assert!(rows[1]["edges"].as_u64().unwrap() > 40);
    assert_eq!(rows[0]["sensors"], 1);
    assert!(v["fit"]["r2"].is_number());
}

#[test]
fn small_theorem_check() {
    let v = json(&dynwatch(&["validate-theorems", "--trials", "4000", "--specs", "3", "--max-t", "100", "--seed", "2"]));
    assert_eq!(v["bounds"].as_array().unwrap().len(), 3);
    assert_eq!(v["all_within_bounds"], true);
    let rows = v["infinite_data"]["rows"].as_array().unwrap();
    let ts: Vec<u64> = rows.iter().map(|r| r["t"].as_u64().unwrap()).collect();
    assert_eq!(ts, [10, 100]);
}

#[test]
fn same_seed_same_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate_case14(&a, "11");
    simulate_case14(&b, "11");
    for f in ["topology.csv", "sensors.csv", "measurements.csv", "labels.csv", "case.m"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    simulate_case14(&c, "12");
    assert_ne!(
        std::fs::read(a.join("measurements.csv")).unwrap(),
        std::fs::read(c.join("measurements.csv")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    let out = dynwatch(&["lodf", "--case", tmp.path().join("missing.m").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = dynwatch(&["lodf", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "usage");

    let case = data("triangle.m");
    let out = dynwatch(&["lodf", "--case", case.to_str().unwrap(), "--outage", "7"]);
    assert_eq!(out.status.code(), Some(1));

    let out = dynwatch(&["--threads", "0", "validate-theorems"]);
    assert_eq!(out.status.code(), Some(1));

    // a bundle whose labels stop short of the measurements
    let bundle = tmp.path().join("run");
    simulate_case14(&bundle, "5");
    let labels = bundle.join("labels.csv");
    let text = std::fs::read_to_string(&labels).unwrap();
    let kept: Vec<&str> = text.lines().take(50).collect();
    std::fs::write(&labels, kept.join("\n") + "\n").unwrap();
    let out = dynwatch(&[
        "detect",
        "--scenario",
        bundle.to_str().unwrap(),
        "--out",
        tmp.path().join("s.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    assert!(dynwatch(&["--help"]).status.success());
}
