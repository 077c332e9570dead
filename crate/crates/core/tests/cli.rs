mod common;

use std::process::{Command, Output};

use common::fixture_path;

fn cdchase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdchase")).args(args).output().expect("binary runs")
}

fn fx(name: &str) -> String {
    fixture_path(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn chase_args<'a>(schema: &'a str, deps: &'a str, data: &'a str) -> Vec<&'a str> {
    vec!["chase", "--schema", schema, "--deps", deps, "--data", data]
}

#[test]
fn validate_exit_codes() {
    let (s, d, bad) = (fx("employees.schema"), fx("employees.deps"), fx("employees_untyped_dept.deps"));
    let ok = cdchase(&["validate", "--schema", &s, "--deps", &d]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("relationships: {manages, works_in}"));
    let rejected = cdchase(&["validate", "--schema", &s, "--deps", &bad, "--format", "json"]);
    assert_eq!(rejected.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&rejected)).unwrap();
    assert_eq!(doc["violations"][0]["condition"], "e");
    assert!(stderr(&rejected).starts_with("error[not-cd]: "));
}

#[test]
fn chase_json_for_the_manager_example() {
    let (s, d, data) = (fx("employees.schema"), fx("employees.deps"), fx("manager.data"));
    let mut args = chase_args(&s, &d, &data);
    args.extend(["--format", "json"]);
    let out = cdchase(&args);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["format_version"], 1);
    assert_eq!(doc["status"], "completed");
    let facts = doc["facts"].as_array().unwrap();
    assert_eq!(facts.len(), 5);
    let levels: Vec<u64> = facts.iter().map(|f| f["level"].as_u64().unwrap()).collect();
    assert_eq!(levels, [0, 0, 1, 1, 1]);
    assert_eq!(facts[2]["predicate"], "dept");
    assert_eq!(stdout(&cdchase(&args)), stdout(&out));
}

#[test]
fn chase_failure_exits_3() {
    let (s, d, data) = (fx("conflict.schema"), fx("conflict.deps"), fx("conflict.data"));
    let out = cdchase(&chase_args(&s, &d, &data));
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).starts_with("status: failed"));
    assert!(stderr(&out).starts_with("error[chase-failed]: "));
}

#[test]
fn budget_exhaustion_exits_4() {
    let dir = std::env::temp_dir().join(format!("cdchase-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p.to_string_lossy().into_owned()
    };
    let s = write("loop.schema", "predicate r/2\n");
    let d = write("loop.deps", "inclusion r[2] <= r[1]\n");
    let data = write("loop.data", "r(a, b)\n");
    let mut args = chase_args(&s, &d, &data);
    args.extend(["--max-steps", "5", "--format", "json"]);
    let out = cdchase(&args);
    assert_eq!(out.status.code(), Some(4));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!((doc["status"].as_str(), doc["step_count"].as_u64()), (Some("active"), Some(5)));
    assert_eq!(doc["stopped_by"], "steps");
    let q = write("loop.query", "q(X) :- r(X, Y).\n");
    let out = cdchase(&["query", "--schema", &s, "--deps", &d, "--data", &data, "--query", &q, "--level", "20", "--max-steps", "3"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).starts_with("error[budget]: "));
    let out = cdchase(&["query", "--schema", &s, "--deps", &d, "--data", &data, "--query", &q, "--level", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "q: 1 answer (levels < 1)\n  (a)\n");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn input_errors_exit_5() {
    let s = fx("employees.schema");
    let out = cdchase(&["validate", "--schema", &s, "--deps", "/nonexistent/deps"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).starts_with("error[io]: "));
    // a schema file is not a dependency file
    let out = cdchase(&["validate", "--schema", &s, "--deps", &s]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).starts_with("error[parse]: "), "{}", stderr(&out));
    assert!(stderr(&out).contains("line 2, column 1"), "{}", stderr(&out));
    let out = cdchase(&["validate", "--schema", &s, "--deps", &fx("employees.deps"), "--format", "dot"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).starts_with("error[usage]: "));
    let out = cdchase(&["chase", "--bogus"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).starts_with("error[usage]: "));
    let out = cdchase(&["repro", "--n", "1"]);
    assert_eq!(out.status.code(), Some(5));
    let out = cdchase(&["chase", "--schema", &s, "--deps", &fx("employees.deps"), "--data", &fx("manager.data"), "--max-steps", "0"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn query_and_contain() {
    let (s, d) = (fx("employees.schema"), fx("employees.deps"));
    let out = cdchase(&["query", "--schema", &s, "--deps", &d, "--data", &fx("manager.data"), "--query", &fx("manager.queries"), "--level", "2", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["queries"][0]["answers"], serde_json::json!([["d"]]));
    let out = cdchase(&["contain", "--schema", &s, "--deps", &d, "--q1", &fx("contain_q1.query"), "--q2", &fx("contain_q2.query"), "--level", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "q1 is contained in q2\n");
    let out = cdchase(&["contain", "--schema", &s, "--deps", &d, "--q1", &fx("contain_q2.query"), "--q2", &fx("contain_q1.query"), "--level", "3", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["verdict"], "not_contained_up_to_level");
}

#[test]
fn repro_outputs() {
    let out = cdchase(&["repro", "--n", "5", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["gap"], 8);
    assert_eq!(doc["e_fact_level"]["5"], 8);
    assert_eq!(doc["discrepancies"], serde_json::json!([]));

    let dot = stdout(&cdchase(&["repro", "--n", "3", "--dot"]));
    assert!(dot.starts_with("digraph"));
    let node = |label: &str| {
        dot.lines().find(|l| l.contains(&format!("label=\"{label}\\n"))).map(|l| l.trim().split(' ').next().unwrap().to_string())
    };
    let children: std::collections::BTreeSet<String> = dot
        .lines()
        .filter(|l| l.trim_start().starts_with('n') && l.contains(" -> "))
        .map(|l| l.trim().trim_end_matches(';').split(" -> ").nth(1).unwrap().to_string())
        .collect();
    let nodes: Vec<String> = dot
        .lines()
        .filter(|l| l.trim_start().starts_with('n') && l.contains("[label="))
        .map(|l| l.trim().split(' ').next().unwrap().to_string())
        .collect();
    let roots: Vec<&String> = nodes.iter().filter(|n| !children.contains(*n)).collect();
    let expected: Vec<String> = ["e(1)", "s(1,2)", "s(2,3)"].iter().map(|l| node(l).unwrap()).collect();
    assert_eq!(roots, expected.iter().collect::<Vec<_>>());
}

#[test]
fn help_succeeds() {
    let out = cdchase(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("repro"));
}
