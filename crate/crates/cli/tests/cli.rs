use ishmm::diagnostics::Diagnostics;
use ishmm_cli::commands::{fit, generate};
use ishmm_cli::config::RunConfig;
use ishmm_cli::experiments::Experiment;
use ishmm_cli::output::{read_json, read_samples, Summary};
use ishmm_cli::series::{read_path, read_series};
use std::path::Path;
use std::process::{Command, Output};

fn ishmm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ishmm")).args(args).current_dir(dir).output().expect("run ishmm")
}

fn small_config(dir: &Path) -> RunConfig {
    let mut cfg = Experiment::IedSynth.config().unwrap();
    cfg.length = 60;
    cfg.burn = 5;
    cfg.samples = 20;
    cfg.init_segments = 5;
    cfg.output = Some(dir.to_path_buf());
    cfg
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn empty_series_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = ishmm(&["generate", "--length", "0", "--out", "g"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("length"), "{err}");
}

#[test]
fn generated_files_read_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let g = generate(&cfg).unwrap();
    let y = read_series(&g.series, false).unwrap();
    assert_eq!(y.len(), 60);
    for (a, b) in y.iter().zip(&g.y) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(read_path(&dir.path().join("truth.csv")).unwrap(), g.path);
    let echoed = RunConfig::load(&dir.path().join("config.echo")).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn same_seed_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "length = 40\nseed = 9\n");
    for out in ["a", "b"] {
        let o = ishmm(&["generate", "--config", &cfg, "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["series.csv", "truth.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let o = ishmm(&["generate", "--config", &cfg, "--seed", "10", "--out", "c"], dir.path());
    assert!(o.status.success());
    assert_ne!(std::fs::read(dir.path().join("a/series.csv")).unwrap(), std::fs::read(dir.path().join("c/series.csv")).unwrap());
}

#[test]
fn one_sample_gives_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    let g = generate(&cfg).unwrap();
    cfg.input = Some(g.series);
    cfg.samples = 1;
    let f = fit(&cfg).unwrap();
    assert_eq!(f.output.samples.len(), 1);
    let text = std::fs::read_to_string(dir.path().join("samples.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn diagnostics_recompute_from_saved_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    let g = generate(&cfg).unwrap();
    cfg.input = Some(g.series);
    fit(&cfg).unwrap();
    let samples = read_samples(&dir.path().join("samples.jsonl")).unwrap();
    assert_eq!(samples.len(), 20);
    let again = Diagnostics::compute(&samples, 60, None).unwrap();
    let summary: Summary = read_json(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.diagnostics, Some(again));
    for f in ["loglik", "fixed_time", "autocorrelation", "state_counts", "changepoint_counts", "changepoint_locations", "states"] {
        assert!(dir.path().join("diagnostics").join(format!("{f}.csv")).is_file(), "{f}");
    }
}

#[test]
fn malformed_series_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "y\n0.5\nnope\n1.0\n").unwrap();
    let out = ishmm(&["fit", "--input", "bad.csv", "--out", "f", "--samples", "2", "--burn", "0"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3"), "{err}");
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ishmm(&["experiment", "no-such-run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ied-synth"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lenght = 40\n");
    let out = ishmm(&["generate", "--config", &cfg, "--out", "g"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lenght"));
}

#[test]
fn coal_writes_changepoint_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let out = ishmm(&["experiment", "coal", "--burn", "5", "--samples", "10", "--out", "coal"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = dir.path().join("coal");
    let counts = std::fs::read_to_string(d.join("diagnostics/changepoint_counts.csv")).unwrap();
    assert!(counts.starts_with("changepoints,samples\n"));
    let locations = std::fs::read_to_string(d.join("diagnostics/changepoint_locations.csv")).unwrap();
    assert_eq!(locations.lines().count(), 113);
    let results: serde_json::Value = read_json(&d.join("results.json")).unwrap();
    assert_eq!(results["first_year"], 1851);
    assert_eq!(results["fit"]["samples"], 10);
}

#[test]
fn left_to_right_run_writes_locations() {
    let dir = tempfile::tempdir().unwrap();
    let out = ishmm(&["experiment", "ilr-synth", "--burn", "5", "--samples", "10", "--out", "ilr"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = dir.path().join("ilr");
    let locations = std::fs::read_to_string(d.join("diagnostics/changepoint_locations.csv")).unwrap();
    assert_eq!(locations.lines().count(), 151);
    assert_eq!(read_series(&d.join("series.csv"), false).unwrap().len(), 150);
    let results: serde_json::Value = read_json(&d.join("results.json")).unwrap();
    assert_eq!(results["matches"].as_array().unwrap().len(), 5);
    assert!(!results["map_path"].as_array().unwrap().is_empty());
}
