use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::DEFAULT_DELTA;
use crate::daproblem::{CovarianceCase, DaScenario};
use crate::error::{Error, Result};

/// Where the matrix A comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Da(DaScenario),
    /// A matrix file in the plain-text exchange format.
    Matrix {
        matrix: PathBuf,
        #[serde(default)]
        name: Option<String>,
    },
}

impl ProblemSource {
    pub fn name(&self) -> String {
        match self {
            Self::Da(s) => s.name.clone(),
            Self::Matrix { matrix, name } => name
                .clone()
                .unwrap_or_else(|| matrix.display().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "over")]
pub enum SweepSpec {
    /// Target ranks at fixed oversampling.
    #[serde(rename = "k")]
    K {
        #[serde(default = "default_k_values")]
        values: Vec<usize>,
        #[serde(default = "default_fixed_p")]
        fixed_p: usize,
    },
    /// Oversampling values at fixed target rank.
    #[serde(rename = "p")]
    P {
        #[serde(default = "default_p_values")]
        values: Vec<usize>,
        #[serde(default = "default_fixed_k")]
        fixed_k: usize,
    },
}

fn default_k_values() -> Vec<usize> {
    (10..=300).step_by(10).collect()
}

fn default_p_values() -> Vec<usize> {
    (2..=100).collect()
}

fn default_fixed_p() -> usize {
    10
}

fn default_fixed_k() -> usize {
    20
}

impl SweepSpec {
    pub fn values(&self) -> &[usize] {
        match self {
            Self::K { values, .. } | Self::P { values, .. } => values,
        }
    }

    /// `(k, ell)` for each sweep value, in config order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        match self {
            Self::K { values, fixed_p } => values.iter().map(|&k| (k, k + fixed_p)).collect(),
            Self::P { values, fixed_k } => values.iter().map(|&p| (*fixed_k, fixed_k + p)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ProblemSource,
    pub sweep: SweepSpec,
    #[serde(default = "default_cases")]
    pub covariance_cases: Vec<CovarianceCase>,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

fn default_cases() -> Vec<CovarianceCase> {
    vec![CovarianceCase::Identity]
}

fn default_n_runs() -> usize {
    20
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl ExperimentConfig {
    pub fn new(scenario: ProblemSource, sweep: SweepSpec, covariance_cases: Vec<CovarianceCase>) -> Self {
        Self {
            scenario,
            sweep,
            covariance_cases,
            n_runs: default_n_runs(),
            delta: default_delta(),
            base_seed: 0,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Unreadable files are I/O errors, malformed contents config errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let ProblemSource::Da(s) = &self.scenario {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.n_runs == 0 {
            return bad("n_runs must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.sweep.values().is_empty() {
            return bad("sweep values must be non-empty".into());
        }
        if self.sweep.values().contains(&0) {
            return bad("sweep values must be positive".into());
        }
        if let SweepSpec::P { fixed_k: 0, .. } = self.sweep {
            return bad("fixed_k must be positive".into());
        }
        if self.covariance_cases.is_empty() {
            return bad("covariance_cases must be non-empty".into());
        }
        for case in &self.covariance_cases {
            if let CovarianceCase::AlphaBeta { alpha, beta } = *case {
                if !(alpha > 0.0) || !(beta >= 0.0) {
                    return bad(format!("C_alpha_beta needs alpha > 0, beta >= 0 (got {alpha}, {beta})"));
                }
            }
            if matches!(self.scenario, ProblemSource::Matrix { .. })
                && !matches!(
                    case,
                    CovarianceCase::Identity | CovarianceCase::ASquared | CovarianceCase::AlphaBeta { .. }
                )
            {
                return bad(format!("case {} needs a data-assimilation scenario", case.label()));
            }
        }
        Ok(())
    }
}
