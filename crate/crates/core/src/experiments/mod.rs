//! Config-driven sweeps over the target rank or the oversampling, one record
//! per (covariance case, sweep value), with CSV/JSON output.

mod config;
mod emit;

pub use config::{ExperimentConfig, OutputFormat, OutputSpec, ProblemSource, SweepSpec};
pub use emit::{emit, parse_csv, to_csv, to_json, CsvRow, CSV_HEADER};

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    baseline_bounds, coefficients_tau_rho_with_limit, expectation_bound, grsvd_bounds, probability_bound,
    solve_ut, BaselineBounds, BoundCoefficients, MAX_COND_K_K,
};
use crate::daproblem::{alpha_beta_factor, assemble_da_matrix, c_factor, covariance_case, CovarianceCase, DaMatrices};
use crate::error::{Error, Result};
use crate::grsvd::{error_stats_with_optimal, generalized_rsvd, ErrorStats, LowRankFactors};
use crate::linalg::{FullSvd, SvdPartition};
use crate::matrix_io::read_matrix;
use crate::sampling::{CovarianceOperator, SeedSpec};

/// Pilot runs draw from streams `PILOT_STREAM_BASE + k`; main runs use
/// streams `0..n_runs`.
pub const PILOT_STREAM_BASE: u64 = 1 << 63;

/// Oversampling of the pilot pass that produces (V̂_k, Σ̂_k).
pub const PILOT_OVERSAMPLING: usize = 10;

/// The test matrix with its SVD, computed once per campaign.
pub struct Problem {
    pub name: String,
    pub a: DMatrix<f64>,
    pub da: Option<DaMatrices>,
    pub svd: FullSvd,
}

impl Problem {
    pub fn load(source: &ProblemSource) -> Result<Self> {
        match source {
            ProblemSource::Da(s) => Ok(Self::from_da(assemble_da_matrix(s)?)),
            ProblemSource::Matrix { matrix, .. } => {
                let a = read_matrix(matrix)?;
                Ok(Self::from_matrix(source.name(), a))
            }
        }
    }

    pub fn from_da(da: DaMatrices) -> Self {
        let svd = FullSvd::new(&da.a);
        Self {
            name: da.scenario.name.clone(),
            a: da.a.clone(),
            da: Some(da),
            svd,
        }
    }

    pub fn from_matrix(name: impl Into<String>, a: DMatrix<f64>) -> Self {
        let svd = FullSvd::new(&a);
        Self {
            name: name.into(),
            a,
            da: None,
            svd,
        }
    }

    /// K = A C Aᵀ as the factor `A · factor(C)`.
    pub fn covariance(&self, case: CovarianceCase, approx: Option<&LowRankFactors>) -> Result<CovarianceOperator> {
        match &self.da {
            Some(da) => covariance_case(case, da, approx),
            None => Ok(CovarianceOperator::from_factor(&self.a * self.c_factor(case, approx)?, case.label())),
        }
    }

    pub fn c_factor(&self, case: CovarianceCase, approx: Option<&LowRankFactors>) -> Result<DMatrix<f64>> {
        if let Some(da) = &self.da {
            return c_factor(case, da, approx);
        }
        let n = self.a.ncols();
        match case {
            CovarianceCase::Identity => Ok(DMatrix::identity(n, n)),
            CovarianceCase::ASquared => Ok(self.a.transpose()),
            CovarianceCase::AlphaBeta { alpha, beta } => {
                let approx = approx.ok_or_else(|| Error::Parameter("C_{alpha,beta} needs a rank-k approximation".into()))?;
                Ok(alpha_beta_factor(approx, alpha, beta))
            }
            other => Err(Error::Config(format!("case {} needs a data-assimilation scenario", other.label()))),
        }
    }

    /// Alg. 1 with C = I at ℓ = k + 10, seeded from the reserved pilot streams.
    pub fn pilot(&self, k: usize, base_seed: u64) -> Result<LowRankFactors> {
        let ell = (k + PILOT_OVERSAMPLING).min(self.a.nrows().min(self.a.ncols()));
        let cov = CovarianceOperator::from_factor(self.a.clone(), "I");
        let seed = SeedSpec::new(base_seed, PILOT_STREAM_BASE + k as u64);
        Ok(generalized_rsvd(&self.a, &cov, ell, k, seed)?.factors)
    }
}

/// Relaxed bounds through β_k(C), γ_k(C); filled by the comparison runner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryFields {
    pub beta_k: f64,
    pub gamma_k: f64,
    pub expect_bound: f64,
    pub prob_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub case: String,
    pub k: usize,
    pub ell: usize,
    pub p: usize,
    pub n_runs: usize,
    pub empirical: Option<ErrorStats>,
    pub coefficients: Option<BoundCoefficients>,
    pub expect_bound: Option<f64>,
    /// expect_bound / ‖Σ̄_k‖_F − 1
    pub expect_ratio: Option<f64>,
    pub prob_bound: Option<f64>,
    pub prob_ratio: Option<f64>,
    pub u: Option<f64>,
    pub t: Option<f64>,
    pub baselines: Option<BaselineBounds>,
    pub corollary: Option<CorollaryFields>,
    pub flags: Vec<String>,
}

impl ExperimentRecord {
    pub fn emp_mean(&self) -> Option<f64> {
        self.empirical.map(|e| e.mean)
    }

    pub fn emp_ratio(&self) -> Option<f64> {
        self.empirical.map(|e| e.ratio_minus_one)
    }

    pub fn has_flag(&self, prefix: &str) -> bool {
        self.flags.iter().any(|f| f.starts_with(prefix))
    }
}

fn error_flag(e: &Error) -> &'static str {
    match e {
        Error::Hypothesis(_) => "hypothesis_violated",
        Error::Infeasible { .. } => "ut_infeasible",
        Error::Degenerate { .. } => "degenerate_sketch",
        Error::NotPsd { .. } => "not_psd",
        _ => "error",
    }
}

struct Runner<'a> {
    problem: &'a Problem,
    config: &'a ExperimentConfig,
    corollary: bool,
}

impl Runner<'_> {
    fn run(&self) -> Result<Vec<ExperimentRecord>> {
        let points = self.config.sweep.points();
        let needs_pilot = self.config.covariance_cases.iter().any(|c| c.needs_approximation());
        let min_dim = self.problem.a.nrows().min(self.problem.a.ncols());

        let pilots: Vec<Option<LowRankFactors>> = points
            .iter()
            .map(|&(k, _)| {
                if !needs_pilot || k >= min_dim {
                    return None;
                }
                self.problem
                    .pilot(k, self.config.base_seed)
                    .map_err(|e| warn!("pilot pass failed at k = {k}: {e}"))
                    .ok()
            })
            .collect();

        let mut out = Vec::new();
        for &case in &self.config.covariance_cases {
            for (i, &(k, ell)) in points.iter().enumerate() {
                info!("{} {} k={k} ell={ell}", self.problem.name, case.label());
                let part = if k < min_dim { self.problem.svd.partition(k).ok() } else { None };
                out.push(self.point(case, k, ell, part.as_ref(), pilots[i].as_ref())?);
            }
        }
        Ok(out)
    }

    fn point(
        &self,
        case: CovarianceCase,
        k: usize,
        ell: usize,
        part: Option<&SvdPartition>,
        approx: Option<&LowRankFactors>,
    ) -> Result<ExperimentRecord> {
        let cfg = self.config;
        let mut rec = ExperimentRecord {
            scenario: self.problem.name.clone(),
            case: case.label(),
            k,
            ell,
            p: ell - k,
            n_runs: cfg.n_runs,
            empirical: None,
            coefficients: None,
            expect_bound: None,
            expect_ratio: None,
            prob_bound: None,
            prob_ratio: None,
            u: None,
            t: None,
            baselines: None,
            corollary: None,
            flags: Vec::new(),
        };
        let min_dim = self.problem.a.nrows().min(self.problem.a.ncols());
        let Some(part) = part.filter(|_| ell <= min_dim) else {
            rec.flags.push("ell_exceeds_dimension".into());
            return Ok(rec);
        };
        if case.needs_approximation() && approx.is_none() {
            rec.flags.push("pilot_failed".into());
            return Ok(rec);
        }
        let cov = match self.problem.covariance(case, approx) {
            Ok(c) => c,
            Err(e @ (Error::Config(_) | Error::Io(_))) => return Err(e),
            Err(e) => {
                warn!("{}: {e}", rec.case);
                rec.flags.push(error_flag(&e).into());
                return Ok(rec);
            }
        };
        let opt = part.optimal_error();

        // A rank-r covariance with r < ℓ gives range(Z) = range(K) for every
        // ℓ ≥ r, so sketching with r columns yields the same projector.
        let run_ell = ell.min(cov.inner_dim());
        if run_ell < ell {
            rec.flags.push(format!("ell_capped={run_ell}"));
            if matches!(case, CovarianceCase::AlphaBeta { beta, .. } if beta == 0.0) {
                rec.flags.push("deterministic_sketch".into());
            }
        }
        let seed = SeedSpec::new(cfg.base_seed, 0);
        match error_stats_with_optimal(&self.problem.a, &cov, run_ell, k, cfg.n_runs, seed, opt) {
            Ok(stats) => {
                if stats.failed_runs > 0 {
                    rec.flags.push(format!("failed_runs={}", stats.failed_runs));
                }
                rec.empirical = Some(stats);
            }
            Err(e) => {
                warn!("{} k={k}: every run failed: {e}", rec.case);
                rec.flags.push(error_flag(&e).into());
            }
        }

        match coefficients_tau_rho_with_limit(part, &cov, ell, f64::INFINITY) {
            Ok(c) => {
                rec.coefficients = Some(c);
                if c.cond_k_k > MAX_COND_K_K {
                    rec.flags.push("cond_k_k_exceeded".into());
                } else {
                    self.fill_bounds(&mut rec, &c, part);
                }
            }
            Err(e) => {
                warn!("{} k={k}: {e}", rec.case);
                rec.flags.push(error_flag(&e).into());
            }
        }

        if self.corollary {
            match self.problem.c_factor(case, approx) {
                Ok(f) => {
                    let c = CovarianceOperator::from_factor(f, case.label());
                    match grsvd_bounds(part, &c, ell, cfg.delta) {
                        Ok(g) => {
                            rec.corollary = Some(CorollaryFields {
                                beta_k: g.beta_k,
                                gamma_k: g.gamma_k,
                                expect_bound: g.report.expectation_bound,
                                prob_bound: g.report.probability_bound,
                            })
                        }
                        Err(_) => rec.flags.push("corollary_unavailable".into()),
                    }
                }
                Err(_) => rec.flags.push("corollary_unavailable".into()),
            }
        }

        if let (Some(e), Some(b)) = (rec.emp_mean(), rec.expect_bound) {
            if e > b {
                rec.flags.push("emp_exceeds_expect".into());
            }
        }
        Ok(rec)
    }

    fn fill_bounds(&self, rec: &mut ExperimentRecord, c: &BoundCoefficients, part: &SvdPartition) {
        let (k, ell) = (rec.k, rec.ell);
        let opt = c.optimal_error;
        if k + 2 > ell {
            rec.flags.push("expectation_needs_p_ge_2".into());
            return;
        }
        if let Ok(e) = expectation_bound(c) {
            rec.expect_bound = Some(e);
            rec.expect_ratio = Some(e / opt - 1.0);
        }
        let ut = if k + 4 > ell {
            rec.flags.push("probability_needs_p_ge_4".into());
            None
        } else {
            match solve_ut(ell, k, self.config.delta) {
                Ok(ut) => Some(ut),
                Err(e) => {
                    rec.flags.push(error_flag(&e).into());
                    None
                }
            }
        };
        if let Some((u, t)) = ut {
            if let Ok(pb) = probability_bound(c, u, t) {
                rec.prob_bound = Some(pb);
                rec.prob_ratio = Some(pb / opt - 1.0);
            }
            rec.u = Some(u);
            rec.t = Some(t);
        }
        // Baselines are the standard-Gaussian (q = 0) results.
        if let Some((u, t)) = ut {
            rec.baselines = baseline_bounds(part, 0, ell, u, t).ok();
        }
    }
}

/// One record per (covariance case, sweep value), ordered by case then value
/// as listed in the config.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let problem = Problem::load(&config.scenario)?;
    run_sweep_on(&problem, config)
}

/// As [`run_sweep`] on an already assembled problem.
pub fn run_sweep_on(problem: &Problem, config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    Runner {
        problem,
        config,
        corollary: false,
    }
    .run()
}

/// The covariance study: same records plus β_k(C), γ_k(C) and the relaxed
/// bounds. Cases built from an available approximation get it from a pilot
/// pass per k.
pub fn run_covariance_comparison(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let problem = Problem::load(&config.scenario)?;
    run_covariance_comparison_on(&problem, config)
}

pub fn run_covariance_comparison_on(problem: &Problem, config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    Runner {
        problem,
        config,
        corollary: true,
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daproblem::DaScenario;

    fn small_problem() -> Problem {
        let mut s = DaScenario::new("small", 80, 20);
        s.gamma = 30.0;
        Problem::from_da(assemble_da_matrix(&s).unwrap())
    }

    fn k_sweep(values: Vec<usize>, cases: Vec<CovarianceCase>, n_runs: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            ProblemSource::Da(DaScenario::new("small", 80, 20)),
            SweepSpec::K { values, fixed_p: 6 },
            cases,
        );
        cfg.n_runs = n_runs;
        cfg.base_seed = 11;
        cfg
    }

    #[test]
    fn single_point_single_run() {
        let p = small_problem();
        let recs = run_sweep_on(&p, &k_sweep(vec![5], vec![CovarianceCase::Prior], 1)).unwrap();
        assert_eq!(recs.len(), 1);
        let e = recs[0].empirical.unwrap();
        assert_eq!(e.std_dev, 0.0);
        assert_eq!(e.n_runs, 1);
    }

    #[test]
    fn records_are_ordered_by_case_then_value() {
        let p = small_problem();
        let cfg = k_sweep(vec![8, 4], vec![CovarianceCase::Identity, CovarianceCase::Prior], 3);
        let recs = run_sweep_on(&p, &cfg).unwrap();
        let keys: Vec<(String, usize)> = recs.iter().map(|r| (r.case.clone(), r.k)).collect();
        assert_eq!(
            keys,
            vec![
                ("C=I".into(), 8),
                ("C=I".into(), 4),
                ("C=B".into(), 8),
                ("C=B".into(), 4)
            ]
        );
    }

    #[test]
    fn bounds_dominate_empirical_and_probability_dominates() {
        let p = small_problem();
        let cfg = k_sweep(vec![4, 8, 12], vec![CovarianceCase::Identity, CovarianceCase::Prior], 10);
        for r in run_sweep_on(&p, &cfg).unwrap() {
            let (e, pb) = (r.expect_ratio.unwrap(), r.prob_ratio.unwrap());
            assert!(pb >= e, "{r:?}");
            assert!(e >= -1e-9);
            assert!(r.emp_mean().unwrap() <= r.expect_bound.unwrap(), "{r:?}");
            let b = r.baselines.unwrap();
            assert!(b.gu_factor_c > 0.0 && b.halko_prob > 0.0);
        }
    }

    #[test]
    fn small_oversampling_is_flagged_not_errored() {
        let p = small_problem();
        let mut cfg = k_sweep(vec![], vec![CovarianceCase::Identity], 2);
        cfg.sweep = SweepSpec::P { values: vec![1, 3, 200], fixed_k: 5 };
        let recs = run_sweep_on(&p, &cfg).unwrap();
        assert!(recs[0].has_flag("expectation_needs_p_ge_2") && recs[0].expect_bound.is_none());
        assert!(recs[1].expect_bound.is_some() && recs[1].prob_bound.is_none());
        assert!(recs[1].has_flag("probability_needs_p_ge_4"));
        assert!(recs[2].has_flag("ell_exceeds_dimension") && recs[2].empirical.is_none());
    }

    #[test]
    fn beta_zero_is_deterministic_and_flagged() {
        let p = small_problem();
        let cfg = k_sweep(vec![6], vec![CovarianceCase::AlphaBeta { alpha: 1.0, beta: 0.0 }], 4);
        let r = &run_covariance_comparison_on(&p, &cfg).unwrap()[0];
        assert!(r.has_flag("ell_capped=6") && r.has_flag("deterministic_sketch"));
        let e = r.empirical.unwrap();
        assert!(e.std_dev <= 1e-10 * e.mean);
        assert!(r.coefficients.unwrap().rho_k < 1e-6);
    }

    #[test]
    fn comparison_cases_carry_corollary_fields() {
        let p = small_problem();
        let cases = vec![
            CovarianceCase::AlphaBeta { alpha: 1.0, beta: 1.0 },
            CovarianceCase::PriorWeighted,
            CovarianceCase::PriorSquared,
        ];
        for r in run_covariance_comparison_on(&p, &k_sweep(vec![5], cases, 3)).unwrap() {
            let c = r.corollary.unwrap_or_else(|| panic!("{r:?}"));
            assert!(c.expect_bound >= r.expect_bound.unwrap() * (1.0 - 1e-9), "{r:?}");
            assert!(c.beta_k > 0.0 && c.gamma_k > 0.0);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let p = small_problem();
        let cfg = k_sweep(vec![3, 7], vec![CovarianceCase::PriorSquared], 5);
        let a = to_csv(&run_sweep_on(&p, &cfg).unwrap());
        let b = to_csv(&run_sweep_on(&p, &cfg).unwrap());
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.base_seed += 1;
        assert_ne!(a, to_csv(&run_sweep_on(&p, &other).unwrap()));
    }

    #[test]
    fn external_matrix_source() {
        let a = crate::testutil::with_spectrum(30, 20, &(0..20).map(|i| 0.7f64.powi(i)).collect::<Vec<_>>(), 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        crate::matrix_io::write_matrix(&path, &a).unwrap();
        let mut cfg = ExperimentConfig::new(
            ProblemSource::Matrix { matrix: path, name: Some("ext".into()) },
            SweepSpec::K { values: vec![3], fixed_p: 5 },
            vec![CovarianceCase::Identity, CovarianceCase::ASquared],
        );
        cfg.n_runs = 3;
        let recs = run_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.scenario == "ext" && r.expect_bound.is_some()));
        // C = AᵀA is one exact power step beyond C = I.
        assert!(recs[1].coefficients.unwrap().rho_k < recs[0].coefficients.unwrap().rho_k);
    }

    #[test]
    fn unreadable_matrix_is_io_error() {
        let cfg = ExperimentConfig::new(
            ProblemSource::Matrix { matrix: "/nonexistent/a.txt".into(), name: None },
            SweepSpec::K { values: vec![3], fixed_p: 5 },
            vec![CovarianceCase::Identity],
        );
        assert!(matches!(run_sweep(&cfg), Err(Error::Io(_))));
    }
}
