use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vrdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrdlab")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write_campaign(dir: &Path) -> std::path::PathBuf {
    fs::write(
        dir.join("model.json"),
        r#"{"rows": [{"row": 3, "family": "discrete_normal", "mean": 1000, "stddev": 80, "grid": {"min": 10, "max": 4000, "step": 10}}]}"#,
    )
    .unwrap();
    let cfg = dir.join("campaign.toml");
    fs::write(
        &cfg,
        r#"model_file = "model.json"
iterations = 120
patterns = ["checkered0", "rowstripe0"]
t_aggon = ["tras"]
temperatures = ["50c"]
output_dir = "out"
master_seed = 3

[analysis.sampling]
n_values = [1, 5, 10]
margins = [0.1]
mc_iterations = 200
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn esttime_reports_headline() {
    let v = json(&vrdlab(&["esttime", "--hammers", "1000", "--taggon", "tras", "--measurements", "94467"]));
    assert_eq!(v["per_measurement_ns"], 100631.13);
    assert!((v["total_seconds"].as_f64().unwrap() - 9.506).abs() < 1e-3);
    assert!(v["human_readable"].as_str().unwrap().contains("seconds"));

    let rows = vrdlab(&[
        "esttime", "--hammers", "8000", "--rows", "262144", "--patterns", "4", "--temps", "3",
    ]);
    let minutes = json(&rows)["total_seconds"].as_f64().unwrap() / 60.0;
    assert!((minutes - 39.1).abs() < 0.1);

    let custom = json(&vrdlab(&["esttime", "--hammers", "10", "--taggon", "7800"]));
    let trefi = json(&vrdlab(&["esttime", "--hammers", "10", "--taggon", "trefi"]));
    assert_eq!(custom, trefi);
}

#[test]
fn esttime_rejects_bad_parallelism() {
    let out = vrdlab(&["esttime", "--hammers", "10", "--parallel", "4"]);
    assert_eq!(out.status.code(), Some(3));
    let out = vrdlab(&["esttime", "--hammers", "10", "--taggon", "fast"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ecc_single_and_batch() {
    let v = json(&vrdlab(&["ecc", "--code", "secded", "--bitflips", "5"]));
    assert_eq!(format!("{:.2e}", v["undetectable"].as_f64().unwrap()), "2.64e-8");
    assert_eq!(format!("{:.2e}", v["detectable_uncorrectable"].as_f64().unwrap()), "1.48e-5");

    let v = json(&vrdlab(&["ecc", "--code", "chipkill", "--ber", "7.6e-5"]));
    assert_eq!(v["code"], "ssc");
    assert!(v["detectable_uncorrectable"].is_null());

    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("bers.csv");
    fs::write(&batch, "label,ber\nmargin10,1e-5\nmargin50,7.6e-5\n").unwrap();
    let v = json(&vrdlab(&["ecc", "--code", "sec", "--batch", batch.to_str().unwrap()]));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["label"], "margin50");
    assert!(rows[0]["result"]["uncorrectable"].as_f64().unwrap() < rows[1]["result"]["uncorrectable"].as_f64().unwrap());

    assert_eq!(vrdlab(&["ecc", "--ber", "1.5"]).status.code(), Some(3));
    assert_eq!(vrdlab(&["ecc"]).status.code(), Some(3));
}

#[test]
fn mitigate_from_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let mut text = String::from("seq,bank,row\n");
    for i in 0..4000 {
        text.push_str(&format!("{i},0,{}\n", if i % 2 == 0 { 99 } else { 101 }));
    }
    fs::write(&trace, text).unwrap();
    let t = trace.to_str().unwrap();

    let prac = json(&vrdlab(&["mitigate", "--technique", "prac", "--rdt", "1024", "--guardband", "0.5", "--trace", t]));
    assert_eq!(prac["technique"], "prac");
    assert_eq!(prac["activations"], 4000);
    assert_eq!(prac["missed_bitflips"], 0);
    assert!(prac["max_unmitigated"].as_u64().unwrap() <= 341);

    let none = json(&vrdlab(&[
        "mitigate", "--technique", "para", "--para-p", "0", "--rdt", "1024", "--trace", t, "--seed", "7",
    ]));
    assert_eq!(none["mitigation_events"], 0);
    assert_eq!(none["missed_bitflips"], 3, "rows 98, 100 and 102 each flip once");

    let a = vrdlab(&["mitigate", "--technique", "para", "--rdt", "1024", "--guardband", "0.5", "--trace", t, "--seed", "7"]);
    let b = vrdlab(&["mitigate", "--technique", "para", "--rdt", "1024", "--guardband", "0.5", "--trace", t, "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);

    let missing = vrdlab(&["mitigate", "--technique", "mint", "--rdt", "10", "--trace", "/nonexistent/trace.csv"]);
    assert_eq!(missing.status.code(), Some(4));
    let out_of_range = vrdlab(&["mitigate", "--technique", "mint", "--rdt", "10", "--trace", t, "--rows-per-bank", "50"]);
    assert_eq!(out_of_range.status.code(), Some(3));
}

#[test]
fn profile_analyze_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_campaign(dir.path());
    let c = cfg.to_str().unwrap();

    let v = json(&vrdlab(&["profile", "--config", c, "--jobs", "2"]));
    assert_eq!(v["series"], 2);
    let manifest = dir.path().join("out/manifest.json");
    let first = fs::read(&manifest).unwrap();

    json(&vrdlab(&["profile", "--config", c, "--jobs", "1"]));
    assert_eq!(fs::read(&manifest).unwrap(), first, "manifest is byte-identical on re-run");

    let m = manifest.to_str().unwrap();
    let report_dir = dir.path().join("analysis");
    let files = json(&vrdlab(&["analyze", "--manifest", m, "--analyses", "stats,cv_scurve", "--out", report_dir.to_str().unwrap()]));
    assert_eq!(files.as_array().unwrap().len(), 4, "two histograms, stats.csv, cv_scurve.csv");
    assert!(report_dir.join("report.md").exists());

    let series = dir.path().join("out/series/row3_checkered0_tras_50c.csv");
    let sample = json(&vrdlab(&["sample", "--series", series.to_str().unwrap(), "--n", "1,5", "--margins", "0.2", "--iterations", "100"]));
    assert_eq!(sample.as_array().unwrap().len(), 2 * 3);

    let mut text = fs::read_to_string(&series).unwrap();
    text = text.replacen(",", ",1", 2);
    fs::write(&series, text).unwrap();
    assert_eq!(vrdlab(&["analyze", "--manifest", m]).status.code(), Some(6));

    let full = json(&vrdlab(&["report", "--config", c, "--out", dir.path().join("full").to_str().unwrap()]));
    let md = fs::read_to_string(full["report"].as_str().unwrap()).unwrap();
    assert!(md.contains("row3_checkered0_tras_50c"));
    assert!(dir.path().join("full/sampling/row3_rowstripe0_tras_50c.csv").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_campaign(dir.path());
    let c = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    json(&vrdlab(&["profile", "--config", c, "--out", a.to_str().unwrap()]));
    json(&vrdlab(&["profile", "--config", c, "--seed", "4", "--out", b.to_str().unwrap()]));
    assert_ne!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn bad_config_and_model_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(vrdlab(&["profile", "--config", cfg.to_str().unwrap()]).status.code(), Some(3));

    fs::write(
        &cfg,
        r#"{"model_file": "missing.json", "iterations": 3, "patterns": ["checkered0"], "t_aggon": ["tras"], "temperatures": ["50c"], "output_dir": "out", "master_seed": 1}"#,
    )
    .unwrap();
    assert_eq!(vrdlab(&["profile", "--config", cfg.to_str().unwrap()]).status.code(), Some(5));
}
