use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use covsketch::experiments::{parse_csv, ExperimentRecord};
use covsketch::matrix_io::{read_matrix, write_matrix};
use covsketch::sampling::{matrix_with_spectrum, SeedSpec};

fn covsketch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covsketch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, out: &Path) -> String {
    let cfg = format!(
        r#"{{
  "scenario": {{"name": "tiny", "n": 60, "m": 12, "gamma": 20.0}},
  "sweep": {{"over": "k", "values": [4, 8], "fixed_p": 6}},
  "covariance_cases": [{{"case": "I"}}, {{"case": "B2"}}, {{"case": "L"}}],
  "n_runs": 4,
  "base_seed": 3,
  "output": {{"path": "{}", "format": "csv"}}
}}"#,
        out.display()
    );
    let path = dir.join("config.json");
    fs::write(&path, cfg).unwrap();
    path.display().to_string()
}

#[test]
fn gen_problem_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("da");
    let o = covsketch(&["gen-problem", "--scenario", "LowObs", "--n", "50", "--m", "10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = read_matrix(out.join("A.txt")).unwrap();
    assert_eq!(a.shape(), (50, 50));
    assert!(read_matrix(out.join("L.txt")).is_ok() && read_matrix(out.join("B.txt")).is_ok());
    assert!(fs::read_to_string(out.join("scenario.json")).unwrap().contains("\"m\": 10"));
}

#[test]
fn sweep_writes_csv_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let cfg = write_config(dir.path(), &out);
    let o = covsketch(&["sweep", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(&out).unwrap();
    let rows = parse_csv(&first).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].case, "C=I");
    assert_eq!(rows[5].case, "C_L");

    assert!(covsketch(&["sweep", "--config", &cfg]).status.success());
    assert_eq!(first, fs::read_to_string(&out).unwrap());

    let other = dir.path().join("other.csv");
    let o = covsketch(&["sweep", "--config", &cfg, "--seed", "4", "--out", other.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(first, fs::read_to_string(&other).unwrap());
}

#[test]
fn compare_emits_json_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("unused.csv"));
    let out = dir.path().join("cmp.json");
    let o = covsketch(&["compare", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs: Vec<ExperimentRecord> = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| r.corollary.is_some()));
}

#[test]
fn bounds_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let sigma: Vec<f64> = (0..15).map(|i| 0.8f64.powi(i)).collect();
    let a = matrix_with_spectrum(20, 15, &sigma, SeedSpec::new(1, 0));
    let a_path = dir.path().join("a.txt");
    write_matrix(&a_path, &a).unwrap();
    let o = covsketch(&["bounds", "--matrix", a_path.to_str().unwrap(), "--k", "3", "--ell", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let e = v["expectation_bound"].as_f64().unwrap();
    let p = v["probability_bound"].as_f64().unwrap();
    assert!(p > e && e > v["coefficients"]["optimal_error"].as_f64().unwrap());
}

#[test]
fn oracle_report_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle.json");
    let o = covsketch(&["oracle", "--samples", "2000", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["pass"].as_bool() == Some(true)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(covsketch(&["sweep", "--config", missing.to_str().unwrap()]).status.code(), Some(3));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"scenario": {"matrix": "a.txt"}, "sweep": {"over": "k"}, "n_runs": 0}"#).unwrap();
    assert_eq!(covsketch(&["sweep", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let out = dir.path().join("x.csv");
    let cfg = write_config(dir.path(), &out);
    assert_eq!(covsketch(&["sweep", "--config", &cfg, "--format", "xml"]).status.code(), Some(2));

    let unwritable = dir.path().join("no").join("dir").join("x.csv");
    let o = covsketch(&["sweep", "--config", &cfg, "--out", unwritable.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    assert_eq!(covsketch(&["gen-problem", "--scenario", "Nope", "--out", "x"]).status.code(), Some(2));
}
