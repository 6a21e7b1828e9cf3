use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatsphere")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_example(dir: &Path, name: &str, args: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut all = vec!["example"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", p(&out)]);
    let o = run(&all);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn emitted_fixtures_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("fagnano.json", &["fagnano-cut", "--t", "0.4"]),
        ("b2.json", &["b2-witness", "--x", "0.1"]),
        ("c2.json", &["c2-witness", "--t", "0.3"]),
        ("delta.json", &["delta-witness", "--theta", "0.3", "--m", "2"]),
        ("poly.json", &["random-polygon", "--n", "5", "--seed", "11"]),
    ];
    for (name, args) in cases {
        let f = write_example(dir.path(), name, args);
        let o = run(&["validate", p(&f)]);
        assert_eq!(code(&o), 0, "{name}");
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["pass"], Value::Bool(true));
    }
}

#[test]
fn example_descriptor_carries_expectations() {
    let o = run(&["example", "b2-witness", "--x", "0.2"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["expected"]["iota"], 1);
    let len = v["expected"]["length"].as_f64().unwrap();
    assert!((len - 3f64.sqrt() * 0.2).abs() < 1e-12);
    assert!(v["triangles"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn usage_and_input_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["enumerate"])), 1);
    assert_eq!(code(&run(&["validate", "/nonexistent/surface.json"])), 1);
    assert_eq!(code(&run(&["example", "fagnano-cut"])), 1);
    assert_eq!(code(&run(&["example", "fagnano-cut", "--t", "1.5"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"triangles\": [{\"id\": 0, \"vertices\": [[0, 0], [1, \"x\"], [0, 1]], \"labels\": [0, 1, 2]}], \"gluings\": []}").unwrap();
    assert_eq!(code(&run(&["validate", p(&bad)])), 1);
}

#[test]
fn mismatched_gluing_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("s.json");
    let body = r#"{
        "triangles": [
            {"id": 0, "vertices": [[0, 0], [1, 0], [0.5, 0.8660254037844386]], "labels": [0, 1, 2]},
            {"id": 1, "vertices": [[0, 0], [0.5, -0.8660254037844386], [1.1, 0]], "labels": [0, 2, 1]}
        ],
        "gluings": [{"a": [0, 0], "b": [1, 2]}, {"a": [0, 1], "b": [1, 1]}, {"a": [0, 2], "b": [1, 0]}]
    }"#;
    std::fs::write(&f, body).unwrap();
    let o = run(&["validate", p(&f)]);
    assert_eq!(code(&o), 2);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], Value::Bool(false));
}

#[test]
fn trace_reports_threads() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_example(dir.path(), "f.json", &["fagnano-cut", "--t", "0.5"]);
    let desc: Value = serde_json::from_str(&stdout(&run(&["example", "fagnano-cut", "--t", "0.5"]))).unwrap();
    let t = &desc["trajectory"];
    let at = format!("{},{}", t["point"]["x"], t["point"]["y"]);
    let dirn = format!("{},{}", t["direction"]["x"], t["direction"]["y"]);
    let face = t["face"].to_string();
    let o = run(&["trace", p(&f), "--face", &face, "--at", &at, "--dir", &dirn, "--budget", "1.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["iota"], 3);
    let o = run(&["--csv", "trace", p(&f), "--face", &face, "--at", &at, "--dir", &dirn, "--budget", "1.5"]);
    assert!(stdout(&o).starts_with("thread,face,entry_x"));
}

#[test]
fn delaunay_and_enumerate() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_example(dir.path(), "p.json", &["random-polygon", "--n", "4", "--seed", "5"]);
    let v: Value = serde_json::from_str(&stdout(&run(&["delaunay", p(&f)]))).unwrap();
    assert!(v["d_T"].as_f64().unwrap() > 0.0 && v["R_T"].as_f64().unwrap() > 0.0);
    assert!(!v["edges"].as_array().unwrap().is_empty());
    let o = run(&["--csv", "enumerate", p(&f), "--max-length", "3", "--kind", "sc"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().count() > 2);
    let o = run(&["verify", p(&f), "--max-length", "2"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn surgery_writes_both_spheres() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_example(dir.path(), "p.json", &["random-polygon", "--n", "6", "--seed", "2"]);
    assert_eq!(code(&run(&["constants", p(&f)])), 0);
    // Pick two polygon corners whose curvatures sum below one.
    let mut done = false;
    'outer: for a in 0..6 {
        for b in a + 1..6 {
            let arg = format!("{a},{b}");
            let o = run(&["surgery", p(&f), "--collapse", &arg, "--out", p(dir.path())]);
            if code(&o) == 0 {
                done = true;
                break 'outer;
            }
        }
    }
    assert!(done, "no pair of corners could be collapsed");
    let top = dir.path().join("top.json");
    assert_eq!(code(&run(&["validate", p(&top)])), 0);
    let inf: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("infinitesimal_0.json")).unwrap()).unwrap();
    assert_eq!(inf["boundary"].as_array().map(|b| b.len()), Some(2));
}

#[test]
fn core_of_a_random_infinite_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_example(dir.path(), "x.json", &["random-infinite", "--n", "4", "--seed", "9"]);
    let o = run(&["core", p(&f)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn billiard_diagonals_in_the_equilateral_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("tri.json");
    std::fs::write(&f, r#"{"vertices": [["0", "0"], ["1", "0"], ["0.5", "0.8660254037844386"]]}"#).unwrap();
    let o = run(&["--csv", "billiard", p(&f), "--max-length", "1.8"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    // Three sides and three altitudes.
    let rows = text.lines().filter(|l| l.starts_with("diag,")).count();
    assert_eq!(rows, 6, "{text}");
    assert!(text.contains("max_length,count,log2_bound,bound_pass"));
}
