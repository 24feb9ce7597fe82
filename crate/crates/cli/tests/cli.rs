use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hydrosentinel_cli::pipeline::{self, Context, Stamped};
use hydrosentinel_cli::report::ExperimentReport;
use hydrosentinel_cli::Experiment;
use serde_json::{json, Value};

fn net1_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets/net1.inp")
}

/// A config small enough to run every stage in seconds.
fn tiny_config(out: &Path) -> Value {
    json!({
        "network": net1_path(),
        "split": { "train_hours": 0.5, "val_hours": 0.25, "test_hours": 0.25 },
        "simulation": { "demand_noise": 0.1 },
        "placements": [
            { "name": "pagerank", "method": "pagerank", "s": 3 },
            { "name": "arbitrary", "method": "arbitrary", "sensors": ["13", "22", "31"] }
        ],
        "architecture": { "K": [2, 1], "F": [4] },
        "window": 5,
        "training": { "epochs": 3, "batch_size": 8 },
        "detector": { "window": 4 },
        "leak_scenario": { "duration_hours": 1, "junction": "21", "start_hours": 0.75, "emitter_coeff": 10.0 },
        "seeds": [1, 2],
        "output_dir": out
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hydrosentinel"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn context(cfg: &Path) -> Context {
    Context::new(Experiment::load(cfg).unwrap()).unwrap()
}

#[test]
fn gen_data_rows_and_rerun_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &tiny_config(&out));
    ok(&run(&["gen-data"], &cfg));
    let healthy = fs::read_to_string(out.join("seed-1/healthy.csv")).unwrap();
    // header plus one row per minute of the one-hour split
    assert_eq!(healthy.lines().count(), 61);
    assert!(out.join("seed-2/leak.csv").exists());
    assert!(out.join("seed-2/leak_baseline.csv").exists());
    ok(&run(&["gen-data"], &cfg));
    assert_eq!(fs::read_to_string(out.join("seed-1/healthy.csv")).unwrap(), healthy);
}

#[test]
fn place_reports_both_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &tiny_config(&out));
    ok(&run(&["place"], &cfg));
    let doc: Value = serde_json::from_slice(&fs::read(out.join("placements.json")).unwrap()).unwrap();
    let placements = doc["placements"].as_array().unwrap();
    let mut pr: Vec<&str> = placements[0]["sensors"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    pr.sort_unstable();
    assert_eq!(pr, ["10", "23", "32"]);
    assert_eq!(placements[1]["sensors"], json!(["13", "22", "31"]));
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_sensors_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = tiny_config(&tmp.path().join("out"));
    c["placements"][0]["s"] = json!(0);
    let out = run(&["place"], &write_config(tmp.path(), &c));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_and_missing_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, "{ \"network\": 3 }").unwrap();
    assert_eq!(run(&["place"], &path).status.code(), Some(2));
    assert_eq!(run(&["place"], &tmp.path().join("absent.json")).status.code(), Some(2));
    let mut c = tiny_config(&tmp.path().join("out"));
    c["network"] = json!("nowhere.inp");
    assert_eq!(run(&["place"], &write_config(tmp.path(), &c)).status.code(), Some(2));
}

#[test]
fn detect_without_checkpoints_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &tiny_config(&out));
    ok(&run(&["gen-data"], &cfg));
    ok(&run(&["place"], &cfg));
    let res = run(&["detect"], &cfg);
    assert_eq!(res.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("reconstructor.json") && msg.contains("run `train` first"), "{msg}");
}

#[test]
fn report_on_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    let res = run(&["report"], &write_config(tmp.path(), &tiny_config(&out)));
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn full_pipeline_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &tiny_config(&out));
    ok(&run(&["run"], &cfg));

    for seed in [1, 2] {
        for name in ["pagerank", "arbitrary"] {
            let dir = out.join(format!("seed-{seed}/{name}"));
            for f in ["reconstructor.json", "predictor.json", "metrics.json", "alarms.json", "residuals.csv", "test_estimates.csv"] {
                assert!(dir.join(f).exists(), "{}", dir.join(f).display());
            }
            let curve = fs::read_to_string(dir.join("predictor_loss.csv")).unwrap();
            assert_eq!(curve.lines().count(), 1 + 3);
            let alarms: Value = serde_json::from_slice(&fs::read(dir.join("alarms.json")).unwrap()).unwrap();
            assert_eq!(alarms["leak"]["junction"], "21");
            assert_eq!(alarms["leak"]["start"], 45);
            assert!(alarms["metrics"].get("false_alarm_steps").is_some());
        }
        assert!(out.join(format!("seed-{seed}/leak_difference.csv")).exists());
    }

    let doc: Stamped<ExperimentReport> = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let r = doc.body;
    assert_eq!(r.rows.len(), 4);
    assert_eq!(r.median.len(), 2);
    assert_eq!(r.residuals.len(), 8);
    let first = &r.residuals[0];
    assert_eq!(first.junctions.iter().filter(|j| j.sensed).count(), 3);
    assert!(first.unsensed.unwrap().count == 6 * 15);
    assert!(fs::read_to_string(out.join("report.txt")).unwrap().contains("median"));
    assert!(out.join("residual_quartiles.csv").exists());

    // a single-seed rerun reproduces that seed's artifacts
    let before = fs::read(out.join("seed-2/pagerank/predictor.json")).unwrap();
    ok(&run(&["train", "--seed", "2"], &cfg));
    assert_eq!(fs::read(out.join("seed-2/pagerank/predictor.json")).unwrap(), before);
}

#[test]
fn no_leak_run_reports_false_alarms_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut c = tiny_config(&out);
    c.as_object_mut().unwrap().remove("leak_scenario");
    c["seeds"] = json!([4]);
    let cfg = write_config(tmp.path(), &c);
    ok(&run(&["run"], &cfg));
    let alarms: Value =
        serde_json::from_slice(&fs::read(out.join("seed-4/pagerank/alarms.json")).unwrap()).unwrap();
    assert!(alarms["leak"].is_null());
    assert!(alarms["metrics"]["detection_delay_steps"].is_null());
    assert!(alarms["metrics"]["false_alarm_steps"].is_u64());
}

#[test]
fn report_refuses_artifacts_from_another_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut c = tiny_config(&out);
    c["seeds"] = json!([1]);
    let cfg = write_config(tmp.path(), &c);
    ok(&run(&["run"], &cfg));
    // changing the detector alters the hash, so earlier artifacts no longer match
    c["detector"]["alpha"] = json!(5.0);
    let cfg = write_config(tmp.path(), &c);
    let res = run(&["report"], &cfg);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("produced by config"));
    assert!(pipeline::load_placements(&context(&cfg)).is_err());
}
