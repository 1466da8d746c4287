use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use modeshift::output::Manifest;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_modeshift"));
    c.env_remove("MODESHIFT_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn bundled(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Case-study set shortened to two hyperperiods.
fn short_config(dir: &Path) -> String {
    let text = fs::read_to_string(bundled("case-study.toml")).unwrap();
    let text = text.replace("horizon = { hyperperiods = 100 }", "horizon = { hyperperiods = 2 }");
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn analyze_bundled_validation_set() {
    let o = run(&["analyze", "--config", &bundled("validation.toml")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("latency M1 -> M2: 420"), "{text}");
    assert!(text.contains("latency M2 -> M1: 450"), "{text}");

    let o = run(&["analyze", "--preset", "validation", "--csv"]);
    assert_eq!(o.status.code(), Some(0));
    let r: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(8).unwrap().to_string()).collect();
    assert_eq!(r, ["10", "40", "80", "140", "200", "10", "30", "60", "100", "180"]);
}

#[test]
fn analyze_writes_csv_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--preset", "case-study", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: Manifest = serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.files.keys().collect::<Vec<_>>(), ["analysis.csv", "transitions.csv"]);
}

#[test]
fn infeasible_analysis_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(bundled("validation.toml")).unwrap().replace("wcet = 60", "wcet = 300");
    let path = tmp.path().join("over.toml");
    fs::write(&path, text).unwrap();
    let o = run(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains(" no"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["analyze"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--seed", "7"]).status.code(), Some(1));
    assert_eq!(run(&["analyze", "--preset", "validation", "--config", "x"]).status.code(), Some(1));
    assert_eq!(run(&["analyze", "--preset", "validation", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--preset", "case-study", "--policy", "rm"]).status.code(), Some(1));
    assert_eq!(run(&["analyze", "--config", "/nonexistent/file.toml"]).status.code(), Some(1));
    assert_eq!(run(&["run-matrix", "--preset", "case-study", "--seeds", ""]).status.code(), Some(1));
    assert_eq!(run(&["report", "--input", "/nonexistent"]).status.code(), Some(1));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let outs = ["a", "b"].map(|d| tmp.path().join(d));
    for out in &outs {
        let o = run(&[
            "simulate",
            "--preset",
            "case-study",
            "--trigger",
            "reactive",
            "--seed",
            "7",
            "--horizon",
            "30000",
            "--trace",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let manifest = fs::read(outs[0].join("manifest.json")).unwrap();
    assert_eq!(manifest, fs::read(outs[1].join("manifest.json")).unwrap());
    let parsed: Manifest = serde_json::from_slice(&manifest).unwrap();
    for name in ["metrics.csv", "per_task.csv", "trace.csv", "series.csv", "predictions.csv", "mode_changes.csv"] {
        assert!(parsed.files.contains_key(name), "{name}");
        assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap());
    }
    let trace = fs::read_to_string(outs[0].join("trace.csv")).unwrap();
    assert!(trace.starts_with("time,event,task,job,mode,detail\n"));
    let series = fs::read_to_string(outs[0].join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 501);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .env("MODESHIFT_OUT", tmp.path())
        .args(["simulate", "--preset", "case-study", "--trigger", "mono", "--horizon", "5000"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("metrics.csv").exists());
}

#[test]
fn validation_run_reports_latencies() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--preset", "validation", "--horizon", "200000", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("EDF random") || text.contains("FP random"), "{text}");
    assert!(text.contains("max latency M1 -> M2"), "{text}");
}

#[test]
fn matrix_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let out = tmp.path().join("m");
    let o = run(&[
        "run-matrix",
        "--config",
        &cfg,
        "--policies",
        "edf,fp",
        "--seeds",
        "1-2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("16 runs, 0 failed"));
    let manifest: Manifest = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.files.contains_key("runs/fp/fuzzy-predictor/seed-2/summary.json"));
    assert!(manifest.files.contains_key("table-edf.txt"));

    let again = tmp.path().join("r");
    let o = run(&["report", "--input", out.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Number of missed deadlines"));
    for name in ["cells.csv", "metrics-edf.csv", "metrics-fp.csv", "per_task.csv"] {
        assert_eq!(fs::read_to_string(out.join(name)).unwrap(), fs::read_to_string(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn fuzzy_eval_prints_risk() {
    let o = run(&["fuzzy", "eval", "--acceleration", "-1", "--prediction", "-1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("change mode"), "{text}");
    let o = run(&["fuzzy", "eval", "--acceleration", "0.5", "--prediction", "0.9", "--preset", "case-study"]);
    assert!(stdout(&o).contains(": stay"));
}
