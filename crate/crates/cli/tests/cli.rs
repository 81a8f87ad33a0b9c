use std::path::PathBuf;
use std::process::{Command, Output};

fn bench_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/benchmarks").join(format!("{name}.json"))
}

fn invbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invbc")).args(args).output().expect("run invbc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines().find_map(|l| l.strip_prefix(&format!("{key}: "))).unwrap_or_else(|| panic!("no '{key}' in {out}"))
}

#[test]
fn synth_overview_is_valid() {
    let o = invbc(&["synth", bench_file("overview").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(field(&out, "verdict"), "valid");
    let cert = field(&out, "certificate");
    assert!(cert.ends_with("*x2") && cert.starts_with('-'), "{cert}");
}

#[test]
fn focus_without_bnb_is_not_valid() {
    let o = invbc(&["synth", bench_file("focus").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(field(&stdout(&o), "verdict").starts_with("refuted"));
}

#[test]
fn unknown_variable_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bench_file("overview")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["flow"][0] = serde_json::Value::String("x2 + zeta".into());
    let path = dir.path().join("bad.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let o = invbc(&["synth", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("zeta") && err.contains("flow[0]"), "{err}");
}

#[test]
fn missing_file_and_bad_flags_exit_one() {
    assert_eq!(invbc(&["synth", "/nonexistent/problem.json"]).status.code(), Some(1));
    assert_eq!(invbc(&["synth", bench_file("overview").to_str().unwrap(), "--dc-method", "qr"]).status.code(), Some(1));
    assert_eq!(invbc(&["bench", "--select", "nope"]).status.code(), Some(1));
}

#[test]
fn empty_bench_selection() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let o = invbc(&["bench", "--select", "", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1);
}

#[test]
fn bench_reports_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let o = invbc(&["bench", "--select", "contrived,lie-der", "--jobs", "2", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("contrived,0,0,0,valid,valid,true,"), "{}", rows[0]);
    assert!(rows[1].starts_with("lie-der,"));
}

#[test]
fn check_reproduces_the_synth_verdict() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["overview", "barr-cert1"] {
        let file = bench_file(name);
        let json = dir.path().join(format!("{name}.json"));
        let s = invbc(&["synth", file.to_str().unwrap(), "--json", json.to_str().unwrap()]);
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        let cert = report["certificate_text"].as_str().unwrap();
        let c = invbc(&["check", file.to_str().unwrap(), "--certificate", cert]);
        assert_eq!(c.status.code(), s.status.code(), "{name}");
        assert_eq!(field(&stdout(&c), "verdict"), field(&stdout(&s), "verdict"), "{name}");
    }
}

#[test]
fn check_refutes_and_emits_smt() {
    let dir = tempfile::tempdir().unwrap();
    let file = bench_file("overview");
    let o = invbc(&["check", file.to_str().unwrap(), "--certificate", "x2", "--emit-smt", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(field(&stdout(&o), "verdict").starts_with("refuted (separation"));
    for f in ["initial.smt2", "consecution-1.smt2", "separation.smt2"] {
        let body = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(body.contains("(check-sat)"), "{f}");
    }
    let bad = invbc(&["check", file.to_str().unwrap(), "--certificate", "x3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn synth_output_is_deterministic() {
    let file = bench_file("barr-cert2");
    let strip = |o: Output| stdout(&o).lines().filter(|l| !l.starts_with("time:")).collect::<Vec<_>>().join("\n");
    let a = strip(invbc(&["synth", file.to_str().unwrap(), "--seed", "7"]));
    let b = strip(invbc(&["synth", file.to_str().unwrap(), "--seed", "7"]));
    assert_eq!(a, b);
}

#[test]
fn trace_csv() {
    let o = invbc(&["trace", bench_file("overview").to_str().unwrap(), "--x0", "0.1,-0.2", "--steps", "5", "--certificate=-x2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,B");
    assert_eq!(lines.len(), 7);
    for l in &lines[1..] {
        let cols: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 4);
        assert!((cols[3] + cols[2]).abs() < 1e-12);
    }
    let wrong = invbc(&["trace", bench_file("overview").to_str().unwrap(), "--x0", "0.1"]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn decompose_dumps_a_valid_split() {
    let o = invbc(&["decompose", bench_file("overview").to_str().unwrap(), "--dc-method", "bound"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let blocks = v.as_array().unwrap();
    assert!(!blocks.is_empty());
    for b in blocks {
        let get = |k: &str| -> Vec<Vec<f64>> { serde_json::from_value(b[k].clone()).unwrap() };
        let (m, m1, m2) = (get("M"), get("M1"), get("M2"));
        for i in 0..m.len() {
            for j in 0..m.len() {
                assert!((m[i][j] - (m1[i][j] - m2[i][j])).abs() < 1e-9);
            }
        }
    }
}
