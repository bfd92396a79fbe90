//! End-to-end runs of the `pidil` binary against fixture files.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use pidil_core::dilation::DilationResult;
use pidil_core::families::{Poset, ProjectionFamily};
use pidil_core::graph::DirectedGraph;
use pidil_core::tuples::{DaggerReport, OperatorTuple};
use serde_json::{json, Value};
use tempfile::TempDir;

fn pidil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pidil"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Real matrix in the `{rows, cols, entries}` format.
fn matrix(rows: &[&[f64]]) -> Value {
    let entries: Vec<Vec<[f64; 2]>> = rows
        .iter()
        .map(|row| row.iter().map(|&x| [x, 0.0]).collect())
        .collect();
    json!({"rows": rows.len(), "cols": rows[0].len(), "entries": entries})
}

struct Fixtures {
    dir: TempDir,
}

impl Fixtures {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn write(&self, name: &str, value: &Value) -> String {
        self.write_raw(name, &value.to_string())
    }

    fn write_raw(&self, name: &str, text: &str) -> String {
        let path = self.dir.path().join(name);
        fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_string()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn half(fx: &Fixtures) -> (String, String) {
    let t = fx.write("half.json", &json!({"dim": 1, "ops": [matrix(&[&[0.5]])]}));
    let p = fx.write(
        "identity.json",
        &json!({"projections": [matrix(&[&[1.0]])]}),
    );
    (t, p)
}

fn example_v(fx: &Fixtures) -> String {
    let h = 0.5_f64.sqrt();
    fx.write(
        "v.json",
        &json!({"dim": 2, "ops": [
            matrix(&[&[1.0, 0.0], &[0.0, 0.0]]),
            matrix(&[&[0.0, 0.0], &[0.0, h]]),
            matrix(&[&[0.0, 0.0], &[h, 0.0]]),
        ]}),
    )
}

fn diagnostic(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().last().expect("a diagnostic line");
    serde_json::from_str(line).expect("diagnostics are JSON")
}

#[test]
fn type1_on_connector_graph() {
    let fx = Fixtures::new();
    let g = fx.write(
        "g.json",
        &json!({"vertices": 2, "edges": [[0, 0], [1, 1], [0, 1]]}),
    );
    let out = pidil(&["type1", &g]);
    assert_eq!(code(&out), 0);
    let verdict: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(verdict["verdict"], "TypeI");

    let g = fx.write(
        "two.json",
        &json!({"vertices": 1, "edges": [[0, 0], [0, 0]]}),
    );
    let out = pidil(&["type1", &g]);
    assert_eq!(code(&out), 0);
    let verdict: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(verdict["verdict"], "NotTypeI");
    assert_eq!(verdict["witness"], 0);
}

#[test]
fn swap_unitary_validates() {
    let fx = Fixtures::new();
    let s = fx.write(
        "swap.json",
        &json!({"dim": 2, "mode": "exact", "ops": [matrix(&[&[0.0, 1.0], &[1.0, 0.0]])]}),
    );
    let out = pidil(&["validate-tuple", &s]);
    assert_eq!(code(&out), 0);
    let report: DaggerReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report.verdict);

    let out = pidil(&["extract-graph", &s, "--dot"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("digraph"));
}

#[test]
fn dilation_round_trips_through_validate_tuple() {
    let fx = Fixtures::new();
    let (t, p) = half(&fx);
    let out_path = fx.path("out.json");
    let out_str = out_path.to_str().unwrap();
    let out = pidil(&["dilate", "-T", &t, "-P", &p, "--depth", "3", "-o", out_str]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = pidil(&["validate-tuple", out_str]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(&out_path).unwrap();
    let result: DilationResult = serde_json::from_str(&text).unwrap();
    assert_eq!(result.depth, 3);
    // ambient C plus levels 0..=3 of a one-loop shift with a one-dimensional defect
    assert_eq!(result.tuple.space_dim(), 5);
    let tuple: OperatorTuple = serde_json::from_str(&text).unwrap();
    assert_eq!(tuple, result.tuple);

    let out = pidil(&["wold", out_str]);
    assert_eq!(code(&out), 0);
    let wold: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(wold["alpha"], json!([1]));
}

#[test]
fn output_is_deterministic() {
    let fx = Fixtures::new();
    let v = example_v(&fx);
    let first = pidil(&["poset", "-T", &v]);
    let second = pidil(&["poset", "-T", &v]);
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, second.stdout);

    let (t, p) = half(&fx);
    let a = pidil(&["dilate", "-T", &t, "-P", &p, "--depth", "2"]);
    let b = pidil(&["dilate", "-T", &t, "-P", &p, "--depth", "2"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn emitted_json_reparses() {
    let fx = Fixtures::new();
    let v = example_v(&fx);

    let out = pidil(&["finest", "-T", &v]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let family: ProjectionFamily = serde_json::from_str(&text).unwrap();
    assert_eq!(family.len(), 2);
    assert_eq!(serde_json::to_string_pretty(&family).unwrap() + "\n", text);

    let p = fx.write_raw("finest.json", &text);
    let out = pidil(&["validate-family", "-T", &v, "-P", &p]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["valid"], true);

    let out = pidil(&["predict", "-T", &v, "-P", &p]);
    assert_eq!(code(&out), 0);
    let prediction: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(prediction["fully_coisometric"], true);
    assert_eq!(prediction["predicted_alpha"], json!([0, 0]));

    let out = pidil(&["poset", "-T", &v]);
    let text = stdout(&out);
    let poset: Poset = serde_json::from_str(&text).unwrap();
    assert_eq!(poset.nodes.len(), 2);
    assert_eq!(serde_json::to_string_pretty(&poset).unwrap() + "\n", text);

    let out = pidil(&["poset", "-T", &v, "--dot"]);
    assert!(stdout(&out).contains("n0 -> n1"));

    let g = fx.write("g.json", &json!({"vertices": 2, "edges": [[0, 1]]}));
    let back: DirectedGraph = serde_json::from_str(&fs::read_to_string(&g).unwrap()).unwrap();
    assert_eq!(back.edges(), &[(0, 1)]);
}

#[test]
fn io_and_parse_errors_exit_one() {
    let fx = Fixtures::new();
    let missing = fx.path("missing.json");
    let out = pidil(&["type1", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert_eq!(diagnostic(&out)["kind"], "Io");

    let bad = fx.write_raw("bad.json", "{\"vertices\": 2, \"edges\": [[0, 5]]}");
    let out = pidil(&["type1", &bad]);
    assert_eq!(code(&out), 1);
    assert_eq!(diagnostic(&out)["kind"], "Parse");

    let (t, p) = half(&fx);
    let out = pidil(&["dilate", "-T", &t, "-P", &p, "--depth", "0"]);
    assert_eq!(code(&out), 1);
    let out = pidil(&["--eps-rank", "-1", "finest", "-T", &t]);
    assert_eq!(code(&out), 1);
    assert_eq!(diagnostic(&out)["exit_code"], 1);
    let out = pidil(&["no-such-command"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn validation_failures_exit_two() {
    let fx = Fixtures::new();
    let s = fx.write(
        "half_tuple.json",
        &json!({"dim": 1, "ops": [matrix(&[&[0.5]])]}),
    );
    let out = pidil(&["validate-tuple", &s]);
    assert_eq!(code(&out), 2);
    let report: DaggerReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(!report.verdict);
    assert_eq!(diagnostic(&out)["exit_code"], 2);

    let big = fx.write("big.json", &json!({"dim": 1, "ops": [matrix(&[&[2.0]])]}));
    let p = fx.write("id.json", &json!({"projections": [matrix(&[&[1.0]])]}));
    let out = pidil(&["dilate", "-T", &big, "-P", &p]);
    assert_eq!(code(&out), 2);

    let v = example_v(&fx);
    let trivial = fx.write(
        "trivial.json",
        &json!({"projections": [matrix(&[&[1.0, 0.0], &[0.0, 0.0]])]}),
    );
    let out = pidil(&["validate-family", "-T", &v, "-P", &trivial]);
    assert_eq!(code(&out), 2);
}

#[test]
fn resource_caps_exit_three() {
    let fx = Fixtures::new();
    let v = example_v(&fx);
    let out = pidil(&["poset", "-T", &v, "--max-blocks", "1"]);
    assert_eq!(code(&out), 3);
    assert_eq!(diagnostic(&out)["kind"], "TooManyBlocks");

    // two loops on one vertex: the path count doubles with each level
    let t = fx.write(
        "two.json",
        &json!({"dim": 1, "ops": [matrix(&[&[0.5]]), matrix(&[&[0.5]])]}),
    );
    let p = fx.write("id.json", &json!({"projections": [matrix(&[&[1.0]])]}));
    let out = pidil(&["dilate", "-T", &t, "-P", &p, "--depth", "12"]);
    assert_eq!(code(&out), 3);
    let out = pidil(&["dilate", "-T", &t, "-P", &p, "--depth", "40"]);
    assert_eq!(code(&out), 3);
    assert_eq!(diagnostic(&out)["kind"], "DepthOverflow");
}

#[test]
fn help_exits_zero() {
    let out = pidil(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("validate-tuple"));
}
