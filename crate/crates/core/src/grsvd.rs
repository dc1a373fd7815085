//! Two-stage randomized SVD with a general Gaussian sketch covariance and
//! empirical statistics of its approximation error.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd_partition, thin_svd};
use crate::sampling::{sample_sketch, CovarianceOperator, SeedSpec};

/// Rank-k factors `A ≈ Û_k Σ̂_k V̂_kᵀ`.
#[derive(Debug, Clone)]
pub struct LowRankFactors {
    pub u_hat_k: DMatrix<f64>,
    pub sigma_hat_k: DVector<f64>,
    pub v_hat_k: DMatrix<f64>,
}

impl LowRankFactors {
    pub fn rank(&self) -> usize {
        self.sigma_hat_k.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u_hat_k * DMatrix::from_diagonal(&self.sigma_hat_k) * self.v_hat_k.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct RsvdOutput {
    pub factors: LowRankFactors,
    pub sketch: DMatrix<f64>,
    /// Orthonormal basis Q of range(Z) from the thin QR.
    pub basis: DMatrix<f64>,
    /// ‖(I − π(Z))A‖_F
    pub residual: f64,
    /// ‖A − Û_kΣ̂_kV̂_kᵀ‖_F, never below ‖Σ̄_k‖_F.
    pub approx_error: f64,
}

/// Thin QR of the sketch; rank deficiency is read off the R diagonal
/// (|r_ii| < max(m, ℓ)·2⁻⁴⁰·|r_00|).
fn sketch_basis(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, ell) = z.shape();
    let qr = z.clone().qr();
    let r = qr.r();
    let r00 = r[(0, 0)].abs();
    let tol = m.max(ell) as f64 * 2f64.powi(-40) * r00;
    let rank = if r00 == 0.0 {
        0
    } else {
        (0..ell).filter(|&i| r[(i, i)].abs() >= tol).count()
    };
    if rank < ell {
        return Err(Error::Degenerate {
            context: "sketch matrix Z".into(),
            rank,
            required: ell,
        });
    }
    Ok(qr.q())
}

fn check_shapes(a: &DMatrix<f64>, cov: &CovarianceOperator, ell: usize, k: usize) -> Result<()> {
    let (m, n) = a.shape();
    if cov.dim() != m {
        return Err(Error::Parameter(format!(
            "covariance dimension {} does not match the {m} rows of A",
            cov.dim()
        )));
    }
    if k == 0 || k > ell || ell > m.min(n) {
        return Err(Error::Parameter(format!(
            "need 1 <= k <= ell <= min(m, n); got k = {k}, ell = {ell}, min(m, n) = {}",
            m.min(n)
        )));
    }
    Ok(())
}

/// Randomized SVD with sketch columns drawn from N(0, K).
///
/// Stage 1 draws Z = FΩ and orthonormalizes it; stage 2 takes the order-k
/// truncated SVD of QᵀA and lifts the left factor back through Q.
pub fn generalized_rsvd(
    a: &DMatrix<f64>,
    cov: &CovarianceOperator,
    ell: usize,
    k: usize,
    seed: SeedSpec,
) -> Result<RsvdOutput> {
    check_shapes(a, cov, ell, k)?;
    let z = sample_sketch(cov, ell, seed)?;
    let q = sketch_basis(&z)?;

    let y = q.tr_mul(a);
    let residual = (a - &q * &y).norm();
    let (uy, sy, vy) = thin_svd(&y);
    // Q(Y − Y_k) is orthogonal to (I − QQᵀ)A, so the squares add.
    let dropped: f64 = sy.iter().skip(k).map(|s| s * s).sum();
    let approx_error = (residual * residual + dropped).sqrt();
    let factors = LowRankFactors {
        u_hat_k: &q * uy.columns(0, k),
        sigma_hat_k: sy.rows(0, k).into_owned(),
        v_hat_k: vy.columns(0, k).into_owned(),
    };
    Ok(RsvdOutput {
        factors,
        sketch: z,
        basis: q,
        residual,
        approx_error,
    })
}

/// Summary of residuals ‖(I − π(Z))A‖_F over independent sketches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Successful runs.
    pub n_runs: usize,
    /// Runs discarded because the sketch was numerically rank deficient.
    pub failed_runs: usize,
    pub optimal_error: f64,
    /// mean / ‖Σ̄_k‖_F − 1. When the optimal error vanishes (rank ≤ k) this
    /// is the relative residual mean / ‖A‖_F instead. Negative values are
    /// possible when ℓ > k, since π(Z) has rank ℓ.
    pub ratio_minus_one: f64,
    /// Mean of the rank-k approximation error ‖A − Û_kΣ̂_kV̂_kᵀ‖_F.
    pub approx_mean: f64,
    /// approx_mean / ‖Σ̄_k‖_F − 1 (same convention as `ratio_minus_one`),
    /// always ≥ 0 up to roundoff.
    pub approx_ratio_minus_one: f64,
}

impl ErrorStats {
    /// Aggregates per-run `(residual, approx_error)` pairs given in run order.
    pub fn from_runs(runs: &[(f64, f64)], failed_runs: usize, optimal_error: f64, a_norm: f64) -> Self {
        let residuals: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let n = residuals.len();
        assert!(n > 0, "no residuals to aggregate");
        let mean = neumaier_sum(residuals.iter().copied()) / n as f64;
        let var = if n > 1 {
            neumaier_sum(residuals.iter().map(|r| (r - mean) * (r - mean))) / (n - 1) as f64
        } else {
            0.0
        };
        let min = residuals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let excess = |x: f64| {
            if optimal_error > 1e-12 * a_norm {
                x / optimal_error - 1.0
            } else if a_norm > 0.0 {
                x / a_norm
            } else {
                0.0
            }
        };
        let approx_mean = neumaier_sum(runs.iter().map(|r| r.1)) / n as f64;
        Self {
            mean,
            std_dev: var.sqrt(),
            min,
            max,
            n_runs: n,
            failed_runs,
            optimal_error,
            ratio_minus_one: excess(mean),
            approx_mean,
            approx_ratio_minus_one: excess(approx_mean),
        }
    }
}

/// Compensated summation; the result depends only on the input order.
pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `(residual, approx_error)` of `n_runs` independent sketches; run i uses
/// stream `seed.stream_id + i`. Entries are in run order whatever the
/// scheduling.
pub fn run_residuals(
    a: &DMatrix<f64>,
    cov: &CovarianceOperator,
    ell: usize,
    k: usize,
    n_runs: usize,
    seed: SeedSpec,
) -> Vec<Result<(f64, f64)>> {
    (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.with_stream(seed.stream_id.wrapping_add(i));
            generalized_rsvd(a, cov, ell, k, s).map(|out| (out.residual, out.approx_error))
        })
        .collect()
}

/// Error statistics when ‖Σ̄_k‖_F is already known.
pub fn error_stats_with_optimal(
    a: &DMatrix<f64>,
    cov: &CovarianceOperator,
    ell: usize,
    k: usize,
    n_runs: usize,
    seed: SeedSpec,
    optimal_error: f64,
) -> Result<ErrorStats> {
    if n_runs == 0 {
        return Err(Error::Parameter("n_runs must be >= 1".into()));
    }
    check_shapes(a, cov, ell, k)?;
    let mut ok = Vec::with_capacity(n_runs);
    let mut first_err = None;
    let mut failed = 0;
    for r in run_residuals(a, cov, ell, k, n_runs, seed) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(first_err.expect("at least one run"));
    }
    Ok(ErrorStats::from_runs(&ok, failed, optimal_error, a.norm()))
}

/// Statistics of ‖(I − π(Z))A‖_F over `n_runs` seeded runs.
pub fn empirical_error_stats(
    a: &DMatrix<f64>,
    cov: &CovarianceOperator,
    ell: usize,
    k: usize,
    n_runs: usize,
    seed: SeedSpec,
) -> Result<ErrorStats> {
    check_shapes(a, cov, ell, k)?;
    let optimal = svd_partition(a, k)?.optimal_error();
    error_stats_with_optimal(a, cov, ell, k, n_runs, seed, optimal)
}
