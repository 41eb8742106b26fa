use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgc")).args(args).output().expect("spawn lgc")
}

fn first_line(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

fn golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    first_line(&p)
}

fn meta(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap()
}

const SHORT: &[&str] = &["--tmax", "40", "--samples", "40", "--chains", "2"];

fn funnel_run(dir: &Path, extra: &[&str]) -> Output {
    let mut a = vec!["--model", "funnel", "--seed", "7", "--metric", "rm", "--out", dir.to_str().unwrap()];
    a.extend_from_slice(SHORT);
    a.extend_from_slice(extra);
    lgc(&a)
}

#[test]
fn funnel_outputs_match_golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let o = funnel_run(dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..2 {
        assert_eq!(first_line(&dir.path().join(format!("samples_chain{k}.csv"))), golden("funnel_samples_header.csv"));
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), golden("summary_header.csv"));
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["q1", "q2"]);
    let rows = std::fs::read_to_string(dir.path().join("samples_chain0.csv")).unwrap().lines().count();
    assert_eq!(rows, 41);
    let m = meta(dir.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["chains"][1]["seed"], 8);
    assert!(m["chains"][0]["cpu_seconds"].as_f64().unwrap() > 0.0);
    assert!(m["chains"][0]["integrator"]["steps"].as_u64().unwrap() > 0);
}

fn assert_same_files(a: &Path, b: &Path, files: &[&str]) {
    for f in files {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(funnel_run(a.path(), &[]).status.success());
    assert!(funnel_run(b.path(), &[]).status.success());
    assert_same_files(a.path(), b.path(), &["samples_chain0.csv", "samples_chain1.csv"]);
}

#[test]
fn serial_matches_parallel() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(funnel_run(a.path(), &[]).status.success());
    assert!(funnel_run(b.path(), &["--serial"]).status.success());
    assert_same_files(a.path(), b.path(), &["samples_chain0.csv", "samples_chain1.csv"]);
}

#[test]
fn bad_metric_is_a_usage_error() {
    let o = lgc(&["--model", "funnel", "--metric", "xy"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rm, em"), "{err}");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    std::fs::write(&cfg, format!("model = \"funnel\"\ntmax = 40.0\nsamples = 20\nchains = 1\nlambda = 2.0\nout = {:?}\n", out)).unwrap();
    let o = lgc(&["--config", cfg.to_str().unwrap(), "--lambda", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = meta(&out);
    assert_eq!(m["config"]["lambda"], 0.5);
    assert_eq!(m["chains"][0]["lambda"], 0.5);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"funnel\"\nt_max = 40.0\n").unwrap();
    let o = lgc(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t_max"));
}

#[test]
fn stiff_run_aborts_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = funnel_run(dir.path(), &["--rtol", "1e-12", "--atol", "1e-12", "--lambda", "0", "--max-steps", "2000"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("step budget") || err.contains("step size"), "{err}");
    assert!(dir.path().join("samples_chain0.partial.csv").exists());
    assert!(!dir.path().join("samples_chain0.csv").exists());
    assert!(!dir.path().join("summary.csv").exists());
    let m = meta(dir.path());
    assert_eq!(m["status"], "aborted");
    assert!(m["chains"][0]["error"].as_str().is_some());
}

#[test]
fn synthetic_data_is_written_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = lgc(&[
        "--model", "bc", "--synthetic-seed", "3", "--length", "10", "--tmax", "30", "--samples", "20", "--chains", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = out.join("data.csv");
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 11);
    let out2 = dir.path().join("b");
    let o = lgc(&[
        "--model", "bc", "--data", data.to_str().unwrap(), "--tmax", "30", "--samples", "20", "--chains", "1",
        "--out", out2.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_same_files(&out, &out2, &["samples_chain0.csv"]);
}

#[test]
fn list_models_prints_catalog() {
    let o = lgc(&["--list-models"]);
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    for m in ["funnel", "sv_leverage", "wishart_sv", "stock_watson"] {
        assert!(s.contains(m));
    }
}
