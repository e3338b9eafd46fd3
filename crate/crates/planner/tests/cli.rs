use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use planner::store::{RunRecord, MANIFEST};
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn planner(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planner"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("PLANNER_RUN_DIR")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn manifest(report: &Value) -> RunRecord {
    let dir = PathBuf::from(report["dir"].as_str().unwrap());
    serde_json::from_slice(&std::fs::read(dir.join(MANIFEST)).unwrap()).unwrap()
}

fn last_stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn small_synth(dir: &Path) -> PathBuf {
    let p = dir.join("synth.json");
    std::fs::write(&p, r#"{"icbs_per_region": [2, 1, 1, 1, 1, 1, 1]}"#).unwrap();
    p
}

#[test]
fn synth_is_deterministic_and_cached() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_synth(a.path());
    let cfg = cfg.to_str().unwrap();
    let r1 = ok(planner(a.path(), &["synth", "--seed", "7", "--config", cfg]));
    let r2 = ok(planner(b.path(), &["synth", "--seed", "7", "--config", cfg]));
    assert_eq!(r1["run_id"], r2["run_id"]);
    let (m1, m2) = (manifest(&r1), manifest(&r2));
    assert_eq!(m1.artifact("panel.csv").unwrap().sha256, m2.artifact("panel.csv").unwrap().sha256);
    assert_eq!(m1.outputs, m2.outputs);
    assert!(m1.outputs.iter().any(|a| a.path == "sources/roster.json"));

    let again = ok(planner(a.path(), &["synth", "--seed", "7", "--config", cfg]));
    assert_eq!(again["cached"], true);
    let forced = ok(planner(a.path(), &["synth", "--seed", "7", "--config", cfg, "--force"]));
    assert_eq!(forced["cached"], false);
    assert_eq!(forced["run_id"], r1["run_id"]);

    let other = ok(planner(a.path(), &["synth", "--seed", "8", "--config", cfg]));
    assert_ne!(manifest(&other).artifact("panel.csv").unwrap().sha256, m1.artifact("panel.csv").unwrap().sha256);
}

#[test]
fn ingest_rebuilds_the_synthetic_panel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth(dir.path());
    let s = ok(planner(dir.path(), &["synth", "--seed", "2", "--config", cfg.to_str().unwrap()]));
    let sdir = PathBuf::from(s["dir"].as_str().unwrap());
    let i = ok(planner(
        dir.path(),
        &[
            "ingest",
            "--manifest",
            sdir.join("sources/roster.json").to_str().unwrap(),
            "--hierarchy",
            sdir.join("hierarchy.json").to_str().unwrap(),
        ],
    ));
    assert_eq!(i["kind"], "INGEST");
    let synth_panel = std::fs::read_to_string(sdir.join("panel.csv")).unwrap();
    let ingested = std::fs::read_to_string(PathBuf::from(i["dir"].as_str().unwrap()).join("panel.csv")).unwrap();
    let parse = |t: &str| -> Vec<(String, f64)> {
        t.lines()
            .skip(1)
            .map(|l| {
                let (k, v) = l.rsplit_once(',').unwrap();
                (k.to_string(), v.parse().unwrap())
            })
            .collect()
    };
    let (a, b) = (parse(&synth_panel), parse(&ingested));
    assert_eq!(a.len(), b.len());
    for ((ka, va), (kb, vb)) in a.iter().zip(&b) {
        assert_eq!(ka, kb);
        assert!((va - vb).abs() <= 1e-9 * va.abs().max(1.0), "{ka}: {va} vs {vb}");
    }
}

#[test]
fn simulate_reproduces_the_published_bau_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let r = ok(planner(
        dir.path(),
        &[
            "simulate",
            "--config",
            f.join("ref.json").to_str().unwrap(),
            "--demand",
            f.join("paper_demand.csv").to_str().unwrap(),
        ],
    ));
    assert_eq!(r["kind"], "SCENARIO_SWEEP");
    let out = PathBuf::from(r["dir"].as_str().unwrap());
    let national = std::fs::read_to_string(out.join("national.csv")).unwrap();
    let bau: Vec<f64> = national
        .lines()
        .filter(|l| l.starts_with("bau,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(bau, [-60.0, -672.0, -1581.0, -2605.0, -3892.0, -5086.0]);
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(
        results.lines().next().unwrap(),
        "region,scenario,year,supply,demand,gap,graduate_joiners,international_joiners,other_recruitments,total_joiners,leavers"
    );
    assert_eq!(results.lines().count(), 337);

    // the snapshot directory is a complete config of its own
    let again = ok(planner(dir.path(), &["simulate", "--config", out.join("config.json").to_str().unwrap()]));
    assert_eq!(again["run_id"], r["run_id"]);
    assert_eq!(again["cached"], true);
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("ref.json");
    let csv = ok(planner(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]));
    let json = ok(planner(dir.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--format", "json"]));
    assert_ne!(csv["run_id"], json["run_id"]);
    let outputs: Vec<&str> = json["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"results.json") && outputs.contains(&"national.json"));
    let rows: Vec<Value> =
        serde_json::from_slice(&std::fs::read(PathBuf::from(json["dir"].as_str().unwrap()).join("results.json")).unwrap())
            .unwrap();
    assert_eq!(rows.len(), 336);
}

#[test]
fn missing_panel_fails_with_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = planner(dir.path(), &["forecast", "--panel", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = last_stderr_json(&out);
    assert_eq!(err["code"], "io");
    assert!(err["message"].as_str().unwrap().contains("missing.csv"));
}

#[test]
fn bad_flags_exit_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["simulate"][..], &["frobnicate"], &["synth", "--seed", "x"], &["simulate", "--config", "a", "--format", "xml"]] {
        let out = planner(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with("error:") && err.contains("--help"), "{args:?}");
    }
}

#[test]
fn tampered_run_fails_on_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("ref.json");
    let r = ok(planner(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]));
    let path = PathBuf::from(r["dir"].as_str().unwrap()).join("summary.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("abs_gap_sum", "shortage_sum");
    std::fs::write(&path, text).unwrap();
    let out = planner(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_stderr_json(&out)["code"], "corrupt_run");
    let forced = ok(planner(dir.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--force"]));
    assert_eq!(forced["cached"], false);
}

#[test]
fn run_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_planner"))
        .args(["synth", "--config", cfg.to_str().unwrap()])
        .env("PLANNER_RUN_DIR", dir.path().join("store"))
        .current_dir(dir.path())
        .output()
        .unwrap();
    let r = ok(out);
    assert!(r["dir"].as_str().unwrap().starts_with(dir.path().join("store").to_str().unwrap()));
}

#[test]
fn features_and_forecast_chain_through_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth(dir.path());
    let s = ok(planner(dir.path(), &["synth", "--seed", "5", "--config", cfg.to_str().unwrap()]));
    let sdir = PathBuf::from(s["dir"].as_str().unwrap());
    let h = sdir.join("hierarchy.json");
    let panel = sdir.join("panel.csv");
    let fcfg = dir.path().join("features.json");
    std::fs::write(&fcfg, r#"{"top_k": 8}"#).unwrap();
    let f = ok(planner(
        dir.path(),
        &["features", "--panel", panel.to_str().unwrap(), "--hierarchy", h.to_str().unwrap(), "--config", fcfg.to_str().unwrap()],
    ));
    assert!(f["summary"]["selected"].as_array().unwrap().len() <= 8);
    let report = PathBuf::from(f["dir"].as_str().unwrap()).join("features.json");
    let qcfg = dir.path().join("forecast.json");
    std::fs::write(
        &qcfg,
        r#"{"engine": {"n_paths": 100}, "grid": [{"n_trees": 30, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 5}]}"#,
    )
    .unwrap();
    let fc = ok(planner(
        dir.path(),
        &[
            "forecast",
            "--seed",
            "5",
            "--panel",
            panel.to_str().unwrap(),
            "--hierarchy",
            h.to_str().unwrap(),
            "--projection",
            sdir.join("projection.csv").to_str().unwrap(),
            "--features",
            report.to_str().unwrap(),
            "--config",
            qcfg.to_str().unwrap(),
        ],
    ));
    let m = manifest(&fc);
    for a in ["forecast.json", "annual.csv", "flows.csv", "demand.csv", "stock.json", "hierarchy.json"] {
        assert!(m.artifact(a).is_some(), "{a}");
    }
    assert_eq!(fc["summary"]["national_base"].as_array().unwrap().len(), 6);
    let fdir = PathBuf::from(fc["dir"].as_str().unwrap());
    let sim = ok(planner(
        dir.path(),
        &[
            "simulate",
            "--config",
            fixtures().join("ref.json").to_str().unwrap(),
            "--flows",
            fdir.join("flows.csv").to_str().unwrap(),
            "--demand",
            fdir.join("demand.csv").to_str().unwrap(),
            "--stock",
            fdir.join("stock.json").to_str().unwrap(),
        ],
    ));
    let rows = std::fs::read_to_string(PathBuf::from(sim["dir"].as_str().unwrap()).join("results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 337);
}
