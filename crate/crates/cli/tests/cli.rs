use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bench_file(name: &str) -> PathBuf {
    root().join("benchmarks").join(name)
}

fn loopnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopnav")).args(args).env_remove("LOOPNAV_SMT").output().expect("run loopnav")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn strip_timings(mut v: Value) -> Value {
    match &mut v {
        Value::Object(m) => {
            m.remove("timings_ms");
        }
        Value::Array(a) => {
            for x in a.iter_mut() {
                *x = strip_timings(x.take());
            }
        }
        _ => {}
    }
    v
}

/// Compare against `tests/golden/<name>`; set `UPDATE_GOLDEN=1` to rewrite.
fn golden(name: &str, actual: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let text = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(text, expected, "golden mismatch for {name}");
}

fn json_stdout(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

#[test]
fn analyze_running_example() {
    let f = bench_file("fig1.ln");
    let o = loopnav(&["analyze", f.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0);
    let v = strip_timings(json_stdout(&o));
    assert_eq!(v["outcome"], "feasible");
    assert_eq!(v["stats"]["pc_len"], 30);
    golden("fig1.json", &v);
}

#[test]
fn json_is_stable_across_runs() {
    let f = bench_file("eqcnt.ln");
    let a = strip_timings(json_stdout(&loopnav(&["analyze", f.to_str().unwrap(), "--json"])));
    let b = strip_timings(json_stdout(&loopnav(&["analyze", f.to_str().unwrap(), "--json"])));
    assert_eq!(a, b);
}

#[test]
fn prove_refuted_variant() {
    let f = bench_file("fig1_a17.ln");
    let o = loopnav(&["prove", f.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0);
    let v = strip_timings(json_stdout(&o));
    assert_eq!(v["evidence"], "eliminated-roots");
    assert_eq!(v["stats"]["sstat"], 0);
    golden("fig1_a17.json", &v);
}

#[test]
fn prove_fails_on_feasible_program() {
    let f = bench_file("fig1.ln");
    assert_eq!(code(&loopnav(&["prove", f.to_str().unwrap()])), 1);
}

#[test]
fn budget_exhaustion_is_inconclusive() {
    let f = bench_file("fig1.ln");
    let o = loopnav(&["analyze", f.to_str().unwrap(), "--max-states", "5"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("inconclusive"));
}

#[test]
fn errors_exit_with_two() {
    let dir = std::env::temp_dir().join(format!("loopnav-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.ln");
    std::fs::write(&bad, "int x = ;\n").unwrap();
    let o = loopnav(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("syntax error"));
    assert_eq!(code(&loopnav(&["analyze", dir.join("missing.ln").to_str().unwrap()])), 2);
}

#[test]
fn dump_chains_text() {
    let f = bench_file("fig1.ln");
    let o = loopnav(&["dump-chains", f.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("c0 (root):"), "{text}");
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("{c1,c2}") && text.contains("{c3,c4}"));
}

#[test]
fn dump_constraints_json() {
    let f = bench_file("fig1.ln");
    let o = loopnav(&["dump-constraints", f.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0);
    golden("fig1_constraints.json", &json_stdout(&o));
}

#[test]
fn bench_filter_runs_matching_cases() {
    let o = loopnav(&["bench", "--filter", "loop", "--json"]);
    assert_eq!(code(&o), 0);
    let rows = json_stdout(&o);
    let names: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["OneLoop", "TwoLoops"]);
    assert!(rows.as_array().unwrap().iter().all(|r| r["matches"] == true && r["stats"]["sstat"] == 0));
}

#[test]
fn reverse_seed_order_agrees() {
    let f = bench_file("doif.ln");
    let o = loopnav(&["analyze", f.to_str().unwrap(), "--json", "--seed-order", "reverse"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json_stdout(&o)["outcome"], "feasible");
}
