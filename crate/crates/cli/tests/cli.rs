use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use signgraph::graph::is_balanced;
use signgraph::SignedGraph;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signgraph"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const PATH3: &str = "%%MatrixMarket matrix coordinate real symmetric\n\
                     3 3 5\n1 1 1.5\n2 1 -1.0\n2 2 2.5\n3 2 1.0\n3 3 1.5\n";

#[test]
fn pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("lap.mtx"), PATH3).unwrap();
    let out = run(&["sample", "lap.mtx", "--budget", "2", "--mu", "0.5", "-o", "s.txt"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(d.join("s.txt")).unwrap();
    let count = text.lines().next().unwrap().split_whitespace().count() - 1;
    assert!((1..=2).contains(&count));
    fs::write(d.join("y.txt"), "1.0\n".repeat(count)).unwrap();
    let out = run(&["reconstruct", "lap.mtx", "--samples", "s.txt", "--values", "y.txt"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let values: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 3);
    assert!(values.iter().all(|v| v.is_finite()));

    fs::write(d.join("g.txt"), "n 3\n0 1 1.0\n1 2 1.0\n0 2 -0.5\n").unwrap();
    let out = run(&["balance", "g.txt", "--report", "r.json"], d);
    assert_eq!(code(&out), 0);
    let balanced = SignedGraph::read_edge_list(out.stdout.as_slice()).unwrap();
    assert!(is_balanced(&balanced).is_some());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["coloring"].as_array().unwrap().len(), 3);

    fs::write(d.join("x.csv"), "a,b,c\n1,2,0\n2,1,1\n0,1,2\n1,1,1\n2,0,1\n").unwrap();
    let out = run(&["learn", "x.csv", "--header", "--phi", "0.05"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("%%MatrixMarket"));
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.toml"),
        "budgets = [3]\n[source]\nkind = \"synthetic\"\nn = 12\navg_degree = 3.0\n\
         weight_range = [0.5, 1.5]\nneg_fraction = 0.5\nsignals = 40\n",
    )
    .unwrap();
    let out = run(&["bench", "cfg.toml", "--trials", "2", "--noise", "gauss:0.5", "-o", "res.csv", "--timings", "t.json"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.join("res.csv")).unwrap();
    // header plus 3 samplers x 2 trials
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().skip(1).all(|l| l.contains("gauss:0.5")));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("res.json")).unwrap()).unwrap();
    assert_eq!(summary["trials"], 2);
    assert!(d.join("t.json").exists());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["sample", "missing.mtx", "--budget", "1"], d)), 2);
    assert_eq!(code(&run(&["frobnicate"], d)), 2);
    assert_eq!(code(&run(&["sample"], d)), 2);
    fs::write(d.join("bad.txt"), "n 3\n0 1 x\n").unwrap();
    let out = run(&["balance", "bad.txt"], d);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    fs::write(d.join("ragged.csv"), "1,2\n3\n").unwrap();
    assert_eq!(code(&run(&["learn", "ragged.csv"], d)), 2);
    // an unbalanced Laplacian cannot be aligned
    fs::write(
        d.join("tri.mtx"),
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 6\n1 1 0.0\n2 1 -1.0\n2 2 3.0\n\
         3 1 1.0\n3 2 -2.0\n3 3 1.0\n",
    )
    .unwrap();
    assert_eq!(code(&run(&["sample", "tri.mtx", "--budget", "1"], d)), 2);
    fs::write(d.join("cfg.toml"), "budgets = [3]\nbogus = 1\n").unwrap();
    assert_eq!(code(&run(&["bench", "cfg.toml"], d)), 2);
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("neg.mtx"),
        "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 -1.0\n2 2 -1.0\n",
    )
    .unwrap();
    fs::write(d.join("s.txt"), "nodes 0\nt_final 0.0\nmu 1.0\nscalars 1.0 1.0\n").unwrap();
    fs::write(d.join("y.txt"), "1.0\n").unwrap();
    let out = run(&["reconstruct", "neg.mtx", "--samples", "s.txt", "--values", "y.txt"], d);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
