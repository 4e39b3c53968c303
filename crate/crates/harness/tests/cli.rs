use std::path::Path;
use std::process::{Command, Output};

use glmb_harness::output::{read_csv, MetricRow};
use serde_json::Value;

fn glmb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glmb"))
        .args(args)
        .current_dir(dir)
        .env_remove("GLMB_SEED")
        .output()
        .unwrap()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"filter": {"detection_probability": 1.5}}"#, "filter.detection_probability"),
        (r#"{"scenario": {"width": "wide"}}"#, "scenario.width"),
        (r#"{"filter": {"no_such_key": 1}}"#, "filter"),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.json"));
        std::fs::write(&path, text).unwrap();
        let out = glmb(&["mc", "--config", path.to_str().unwrap(), "--runs", "1", "--out", "o"], dir.path());
        assert!(!out.status.success());
        let e = error_line(&out);
        assert_eq!(e["status"], "error");
        assert_eq!(e["kind"], "config");
        assert!(e["key"].as_str().unwrap().starts_with(key), "{e}");
    }
}

#[test]
fn usage_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let out = glmb(&["track", "--input", "x", "--out", "o", "--variant", "phd"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["kind"], "usage");

    let out = glmb(&["track", "--input", "missing", "--out", "o"], dir.path());
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["kind"], "runtime");
}

#[test]
fn simulate_track_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = glmb(&["simulate", "--seed", "3", "--run", "1", "--out", "sim"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(d.join("sim/frames")).unwrap().count(), 100);

    for variant in ["glmb", "glmb-im"] {
        let out_dir = format!("trk-{variant}");
        let out = glmb(&["track", "--input", "sim", "--variant", variant, "--seed", "3", "--out", &out_dir], d);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(d.join(&out_dir).join("tracks.csv").exists());
        assert_eq!(std::fs::read_to_string(d.join(&out_dir).join("snapshots.jsonl")).unwrap().lines().count(), 100);
    }

    // A perfect estimate scores zero on every frame.
    let out = glmb(&["eval", "--tracks", "sim/truth.csv", "--truth", "sim/truth.csv", "--out", "self"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<MetricRow> = read_csv(&d.join("self/metrics.csv")).unwrap();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.ospa == 0.0 && r.est_card == r.true_card));

    let out = glmb(&["eval", "--tracks", "trk-glmb-im/tracks.csv", "--truth", "sim/truth.csv", "--out", "ev"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<MetricRow> = read_csv(&d.join("ev/metrics.csv")).unwrap();
    assert!(rows.iter().all(|r| (0.0..=20.0).contains(&r.ospa)));
}

#[test]
fn mc_report_matches_csvs_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = glmb(&["mc", "--seed", "5", "--runs", "2", "--out", "mc"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&d.join("mc/report.json"));
    let metrics: Vec<MetricRow> = read_csv(&d.join("mc/metrics.csv")).unwrap();
    for v in report["variants"].as_array().unwrap() {
        let name = v["variant"].as_str().unwrap();
        let rows: Vec<&MetricRow> = metrics.iter().filter(|m| m.variant == name).collect();
        let mean = rows.iter().map(|m| m.ospa).sum::<f64>() / rows.len() as f64;
        let within = rows.iter().filter(|m| m.est_card.abs_diff(m.true_card) <= 1).count() as f64 / rows.len() as f64;
        assert!((v["mean_ospa"].as_f64().unwrap() - mean).abs() < 1e-12);
        assert!((v["cardinality_within_one"].as_f64().unwrap() - within).abs() < 1e-12);
    }

    // Both variants of a run saw the same input, and simulate renders it.
    for run in 0..2 {
        let out_dir = format!("sim{run}");
        let out = glmb(&["simulate", "--seed", "5", "--run", &run.to_string(), "--out", &out_dir], d);
        assert!(out.status.success());
        let sim = json(&d.join(&out_dir).join("scenario.json"));
        assert_eq!(sim["input_checksum"], report["runs"][run]["input_checksum"]);
    }

    // Re-scoring the written tracks reproduces the written metrics.
    let out = glmb(&["eval", "--tracks", "mc/tracks.csv", "--truth", "mc/truth.csv", "--out", "ev"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut again: Vec<MetricRow> = read_csv(&d.join("ev/metrics.csv")).unwrap();
    let mut orig = metrics.clone();
    let key = |m: &MetricRow| (m.variant.clone(), m.run, m.frame);
    again.sort_by_key(key);
    orig.sort_by_key(key);
    assert_eq!(again.len(), orig.len());
    for (a, b) in again.iter().zip(&orig) {
        assert!((a.ospa - b.ospa).abs() < 1e-9, "{:?} vs {:?}", key(a), key(b));
    }
}

#[test]
fn seed_env_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let by_flag = glmb(&["simulate", "--seed", "11", "--out", "a"], d);
    assert!(by_flag.status.success());
    let by_env = Command::new(env!("CARGO_BIN_EXE_glmb"))
        .args(["simulate", "--out", "b"])
        .current_dir(d)
        .env("GLMB_SEED", "11")
        .output()
        .unwrap();
    assert!(by_env.status.success());
    for f in ["truth.csv", "detections.csv", "scenario.json"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn oracle_check_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = glmb(&["oracle-check", "--instances", "5", "--trials", "2000", "--out", "oc"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("oracle-check: instances=5 trials=2000"), "{stdout}");
    assert_eq!(json(&dir.path().join("oc/oracle_check.json"))["results"].as_array().unwrap().len(), 5);
}

#[test]
fn shipped_default_config_is_the_builtin_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let cfg = glmb_harness::Config::load(&path).unwrap();
    assert_eq!(cfg, glmb_harness::Config::default());
}
