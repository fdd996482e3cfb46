use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resonance-forge"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn stationary_spectrum_lands_in_a_fresh_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("nested/dir");
    let o = run(&["spectrum"], &config("stationary.json"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let spec = json(&out.join("spectrum.json"));
    let ex: Vec<f64> = spec["exponents"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((ex[0] + 2.0).abs() < 1e-6 && (ex[1] + 1.0).abs() < 1e-6, "{ex:?}");
    let csv = std::fs::read_to_string(out.join("raw_exponents.csv")).unwrap();
    assert!(csv.starts_with("index,exponent\n"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1"#).unwrap();
    let o = run(&["verify"], &bad, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));

    let o = run(&["verify"], &config("noncontracting.json"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not contracting"));

    let o = run(&["frobnicate"], &config("default.json"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let missing = run(&["spectrum"], &tmp.path().join("absent.json"), tmp.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn normal_form_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = |name: &str| {
        let o = run(&["normalform"], &config(name), &tmp.path().join(name));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let stationary = summary("stationary.json");
    let line = stationary.lines().find(|l| l.starts_with("normalform:")).unwrap();
    let residual: f64 = line.split("residual=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(residual <= 1e-8, "{line}");
    assert!(line.contains("margin="));

    summary("default.json");
    let charts = json(&tmp.path().join("default.json/charts.json"));
    assert_eq!(charts["residual"].as_f64(), Some(0.0));
    assert!(summary("half_pinched.json").contains("linear normal form"));
}

#[test]
fn verify_names_the_first_failing_check() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["verify"], &config("injected.json"), tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("check failed: jet_resonance"));
    let verdict = json(&tmp.path().join("verify.json"));
    assert_eq!(verdict["first_failure"], "jet_resonance");
    assert_eq!(verdict["passed"], false);
}

#[test]
fn thread_cap_does_not_change_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let base = |threads: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = Command::new(env!("CARGO_BIN_EXE_resonance-forge"))
            .env("RESONANCE_FORGE_THREADS", threads)
            .args(["report", "--config"])
            .arg(config("markov.json"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        (o.status.code(), out)
    };
    let (c1, a) = base("1", "one");
    let (c4, b) = base("4", "four");
    assert_eq!((c1, c4), (Some(0), Some(0)));
    for f in ["weights.csv", "manifest.json", "stable_classes.csv", "decay.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(base("0", "zero").0, Some(2));
}
