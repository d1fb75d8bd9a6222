//! End-to-end runs of the `sandlab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sandlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sandlab")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen_grid(dir: &Path, n: &str, file: &str) {
    let out = sandlab(&["gen", "grid", "--n", n, "-o", file], dir);
    assert!(out.status.success(), "{out:?}");
}

#[test]
fn gen_writes_graph_with_expected_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = sandlab(&["gen", "grid", "--n", "8", "-o", "grid8.json", "--summary", "s.json"], dir.path());
    assert!(out.status.success());
    let graph: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("grid8.json")).unwrap()).unwrap();
    let sink = graph["sink"].as_u64().unwrap();
    assert_eq!(graph["n_vertices"].as_u64().unwrap(), 65);
    let sink_degree: u64 = graph["edges"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e[0].as_u64() == Some(sink) || e[1].as_u64() == Some(sink))
        .map(|e| e[2].as_u64().unwrap())
        .sum();
    assert_eq!(sink_degree, 32);

    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    let keys: Vec<&str> = summary.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["command", "results", "seed", "wall_time"]);
    assert_eq!(summary["results"]["ordinary_vertices"], 64);
}

#[test]
fn tcl_single_site_on_grid2_prints_30() {
    let dir = tempfile::tempdir().unwrap();
    gen_grid(dir.path(), "2", "grid2.json");
    let out = sandlab(&["tcl", "single-site", "--graph", "grid2.json", "--site", "1,1"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "30");
}

#[test]
fn estimator_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |file: &'static str| ["estimate", "mv", "--family", "grid", "--sizes", "8,16", "--samples", "50", "--seed", "7", "-o", file];
    assert!(sandlab(&args("a.csv"), dir.path()).status.success());
    assert!(sandlab(&args("b.csv"), dir.path()).status.success());
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("family,n,seed,property,sample_id,v,r,R,value\n"));
}

#[test]
fn epicenter_writes_trace_json() {
    let dir = tempfile::tempdir().unwrap();
    gen_grid(dir.path(), "17", "grid17.json");
    let out = sandlab(&["epicenter", "--graph", "grid17.json", "--from", "1,1", "--to", "15,15", "-o", "trace.json"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let trace: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    assert!(trace["steps"].as_array().is_some_and(|s| !s.is_empty()));
    assert!(trace["total"].as_str().unwrap().parse::<u128>().unwrap() > 0);
    assert_eq!(trace["target_flooded"], true);
}

#[test]
fn stabilize_potentials_flood_and_verify_run() {
    let dir = tempfile::tempdir().unwrap();
    gen_grid(dir.path(), "2", "grid2.json");

    let out = sandlab(&["stabilize", "--graph", "grid2.json", "--point", "1,1:30"], dir.path());
    let json: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["sink_absorbed"], 26);

    fs::write(dir.path().join("c.json"), r#"{"values":[4,0,0,0]}"#).unwrap();
    let out = sandlab(&["stabilize", "--graph", "grid2.json", "--config", "c.json", "--policy", "random:5"], dir.path());
    let json: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["topplings_total"], 1);

    let out = sandlab(&["potentials", "--graph", "grid2.json", "--pole", "0,0"], dir.path());
    let csv = stdout(&out);
    let v3: f64 = csv.lines().nth(4).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((v3 - 1.0 / 7.0).abs() < 1e-12);

    let out = sandlab(&["flood", "--graph", "grid2.json", "--site", "0,0", "--target", "1,0;0,1"], dir.path());
    assert_eq!(stdout(&out).trim(), "4");

    let out = sandlab(&["verify", "--graph", "grid2.json", "--samples", "20"], dir.path());
    assert!(out.status.success());
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    gen_grid(dir.path(), "2", "grid2.json");
    assert_eq!(sandlab(&["gen", "grid", "--n", "4", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(sandlab(&["estimate", "nope", "--family", "grid", "--sizes", "8"], dir.path()).status.code(), Some(1));
    assert_eq!(sandlab(&["gen", "grid", "--n", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(sandlab(&["gen", "grid", "--n", "2", "-o", "missing/dir/g.json"], dir.path()).status.code(), Some(2));
    assert_eq!(sandlab(&["tcl", "single-site", "--graph", "grid2.json", "--site", "5,5"], dir.path()).status.code(), Some(2));

    let limited = Command::new(env!("CARGO_BIN_EXE_sandlab"))
        .args(["tcl", "exact", "--graph", "grid2.json"])
        .env("SANDLAB_STATE_LIMIT", "10")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(limited.status.code(), Some(3));
    let ok = sandlab(&["tcl", "exact", "--graph", "grid2.json"], dir.path());
    assert!(ok.status.success());
}
