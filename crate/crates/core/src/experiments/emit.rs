use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{ExperimentRecord, OutputFormat};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 22] = [
    "scenario",
    "case",
    "k",
    "ell",
    "p",
    "n_runs",
    "emp_mean",
    "emp_std",
    "emp_ratio",
    "tau",
    "rho",
    "condKk",
    "expect_bound",
    "expect_ratio",
    "prob_bound",
    "prob_ratio",
    "u",
    "t",
    "halko_prob",
    "gu_expect",
    "gu_factor_c",
    "flags",
];

/// One parsed CSV line; empty cells become `None`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub scenario: String,
    pub case: String,
    pub k: usize,
    pub ell: usize,
    pub p: usize,
    pub n_runs: usize,
    pub emp_mean: Option<f64>,
    pub emp_std: Option<f64>,
    pub emp_ratio: Option<f64>,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "condKk")]
    pub cond_kk: Option<f64>,
    pub expect_bound: Option<f64>,
    pub expect_ratio: Option<f64>,
    pub prob_bound: Option<f64>,
    pub prob_ratio: Option<f64>,
    pub u: Option<f64>,
    pub t: Option<f64>,
    pub halko_prob: Option<f64>,
    pub gu_expect: Option<f64>,
    pub gu_factor_c: Option<f64>,
    pub flags: String,
}

fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn row(r: &ExperimentRecord) -> Vec<String> {
    let e = r.empirical;
    let c = r.coefficients;
    let b = r.baselines;
    vec![
        r.scenario.clone(),
        r.case.clone(),
        r.k.to_string(),
        r.ell.to_string(),
        r.p.to_string(),
        r.n_runs.to_string(),
        num(e.map(|e| e.mean)),
        num(e.map(|e| e.std_dev)),
        num(e.map(|e| e.ratio_minus_one)),
        num(c.map(|c| c.tau_k)),
        num(c.map(|c| c.rho_k)),
        num(c.map(|c| c.cond_k_k)),
        num(r.expect_bound),
        num(r.expect_ratio),
        num(r.prob_bound),
        num(r.prob_ratio),
        num(r.u),
        num(r.t),
        num(b.map(|b| b.halko_prob)),
        num(b.map(|b| b.gu_expect)),
        num(b.map(|b| b.gu_factor_c)),
        r.flags.join(";"),
    ]
}

pub fn to_csv(records: &[ExperimentRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record(row(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn to_json(records: &[ExperimentRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

pub fn emit(records: &[ExperimentRecord], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Parameter("no records to emit".into()));
    }
    let text = match format {
        OutputFormat::Csv => to_csv(records),
        OutputFormat::Json => to_json(records),
    };
    fs::write(path, text)?;
    Ok(())
}
