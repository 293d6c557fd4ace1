use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pnr_core::{bin_weights, synthetic_timetags, write_timetags, MultiplexerSpec, TriggerConfig};
use serde_json::Value;
use tempfile::TempDir;

fn pnr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pnr(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, body: &str) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn simulate_fock_zero_is_all_dark() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    ok(&[
        "simulate",
        "--fock",
        "0",
        "--n-pulses",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report = json(&out.join("simulate.json"));
    let hist: Vec<u64> = serde_json::from_value(report["histogram"].clone()).unwrap();
    assert_eq!(hist[0], 1000);
    assert!(hist[1..].iter().all(|&c| c == 0));
}

#[test]
fn simulate_is_deterministic_and_round_trips_through_estimate() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["simulate", "--mu", "5", "--seed", "11", "--out", out.to_str().unwrap()]);
    }
    let hist_a = fs::read(a.join("histogram.csv")).unwrap();
    assert_eq!(hist_a, fs::read(b.join("histogram.csv")).unwrap());

    let summary = json(&a.join("simulate.json"));
    let est = &summary["estimate"];
    let mu_hat = est["mu_hat"].as_f64().unwrap();
    let std = est["std"].as_f64().unwrap();
    assert!((mu_hat - 5.0).abs() < 3.0 * std, "{mu_hat} +- {std}");
    assert_eq!(summary["config"]["detector"]["n"], 16);
    assert_eq!(summary["seed"], 11);

    let e = dir.path().join("e");
    let hist_path = a.join("histogram.csv");
    ok(&[
        "estimate",
        hist_path.to_str().unwrap(),
        "--format",
        "histogram",
        "--out",
        e.to_str().unwrap(),
    ]);
    let again = json(&e.join("estimate.json"));
    assert_eq!(again["estimate"]["mu_hat"].as_f64().unwrap(), mu_hat);
}

#[test]
fn estimate_edge_samples() {
    let dir = TempDir::new().unwrap();
    let zeros = dir.path().join("zeros.csv");
    fs::write(&zeros, "0\n0\n0\n0\n").unwrap();
    let out = dir.path().join("z");
    ok(&["estimate", zeros.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let report = json(&out.join("estimate.json"));
    assert_eq!(report["estimate"]["mu_hat"].as_f64(), Some(0.0));
    assert_eq!(report["estimate"]["std"].as_f64(), Some(0.0));

    let full = dir.path().join("full.csv");
    fs::write(&full, "16\n16\n16\n").unwrap();
    let res = pnr(&["estimate", full.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("every bin clicked"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1\n2\nthree\n").unwrap();
    let res = pnr(&["estimate", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));

    let res = pnr(&["estimate", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[detector]\neta = 1.5\n");
    let res = pnr(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let cfg = write_config(&dir, "not valid toml [");
    assert_eq!(pnr(&["classify", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn sweep_flags_saturation_and_needs_two_points() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sw");
    ok(&[
        "sweep",
        "--mu0",
        "1500",
        "--od-list",
        "0,1,2",
        "--n-pulses",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report = json(&out.join("sweep.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows[0]["saturated"], true);
    assert_eq!(rows[0]["in_fit"], false);
    assert!(rows[1..].iter().all(|r| r["in_fit"] == true));
    assert_eq!(report["fit"]["residuals"].as_array().unwrap().len(), 2);

    let res = pnr(&[
        "sweep",
        "--od-list",
        "2",
        "--n-pulses",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn classify_single_bin_separates_only_dark_from_light() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[detector]\nn = 1\neta = 1.0\n");
    let out = dir.path().join("cl");
    ok(&[
        "classify",
        "--config",
        &cfg,
        "--m-max",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report = json(&out.join("classify.json"));
    assert_eq!(report["decision"], serde_json::json!([0, 1]));
    assert_eq!(report["max_resolvable"], 1);
    assert_eq!(data_rows(&out.join("classify_matrix.csv")).len(), 2);
}

#[test]
fn bandwidth_table() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bw");
    ok(&[
        "bandwidth",
        "--delta-lambda-range",
        "-20:20:5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = data_rows(&out.join("bandwidth.csv"));
    assert_eq!(rows.len(), 9);
    let centre = &rows[4];
    assert_eq!(centre[0], "0");
    assert!(centre[1..17].iter().all(|f| f.parse::<f64>().unwrap() == 1.0 / 16.0));
    assert_eq!(rows[8][17], "11");
    assert_eq!(rows[0][17], "11");

    let expected = bin_weights(&MultiplexerSpec::default(), 0.0).unwrap().linear_coeffs;
    let coeffs: Vec<f64> = data_rows(&out.join("bandwidth_coefficients.csv"))
        .iter()
        .map(|r| r[4].parse().unwrap())
        .collect();
    assert_eq!(coeffs, expected);

    let res = pnr(&[
        "bandwidth",
        "--delta-lambda-range",
        "0:200:50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn ingest_recovers_a_known_pattern() {
    let dir = TempDir::new().unwrap();
    let pattern = [3u32, 0, 16, 7, 1];
    let records = synthetic_timetags(&pattern, &TriggerConfig::default(), 4).unwrap();
    let tags = dir.path().join("tags.csv");
    write_timetags(fs::File::create(&tags).unwrap(), &records).unwrap();
    let out = dir.path().join("in");
    ok(&["ingest", tags.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let sample: Vec<u32> = fs::read_to_string(out.join("sample.csv"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(sample, pattern);
    let report = json(&out.join("ingest.json"));
    assert_eq!(report["stray_events"], 0);
    assert_eq!(report["n_triggers"], 5);
}

#[test]
fn ingest_only_triggers_and_malformed_lines() {
    let dir = TempDir::new().unwrap();
    let tags = dir.path().join("triggers.csv");
    fs::write(&tags, "0,0\n0,10000000\n0,20000000\n").unwrap();
    let out = dir.path().join("in");
    ok(&["ingest", tags.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(out.join("sample.csv")).unwrap(), "0\n0\n0\n");
    assert_eq!(json(&out.join("ingest.json"))["estimate"]["mu_hat"].as_f64(), Some(0.0));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "0,0\n1,100000\n1;5\n").unwrap();
    let res = pnr(&["ingest", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));
}

#[test]
fn reference_config_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let cfg = pnr_cli::RunConfig::load(&path).unwrap();
    assert_eq!(cfg, pnr_cli::RunConfig::default());
}
