//! τ_k(K), ρ_k(K) and the error bounds built on them.
//!
//! Everything is evaluated from a factor `K = F Fᵀ`. With `F_k = U_kᵀF`,
//! `F̄_k = Ū_kᵀF` and the thin QR `F_kᵀ = Q R` (so `K_k = RᵀR`):
//!
//! - tanmat(U_k, K U_k) = F̄_k Q R⁻ᵀ
//! - ‖(I − π(K^½U_k))K^½‖_F² = tr(K − K U_k K_k⁻¹ U_kᵀ K) = ‖F̄_k (I − QQᵀ)‖_F²
//! - tr(Σ_k² K_k⁻¹) = ‖R⁻ᵀ Σ_k‖_F²
//!
//! which never forms K, K^½ or K_k⁻¹.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diag, rank_cutoff, SvdPartition};
use crate::sampling::CovarianceOperator;

/// Largest condition number of K_k accepted before the invertibility
/// hypothesis is declared violated.
pub const MAX_COND_K_K: f64 = 1e12;

/// Default failure budget for probability bounds.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCoefficients {
    pub tau_k: f64,
    pub rho_k: f64,
    pub k: usize,
    pub ell: usize,
    /// Condition number of K_k = U_kᵀKU_k.
    pub cond_k_k: f64,
    /// ‖tanmat(U_k, KU_k) Σ_k‖_F²
    pub tangent_sq: f64,
    /// ‖(I − π(K^½U_k))K^½‖_F²
    pub residual_sq: f64,
    /// tr(Σ_k² K_k⁻¹)
    pub trace_inv: f64,
    pub optimal_error: f64,
}

impl BoundCoefficients {
    /// Closed form of E‖Z̄_k Z_k⁺ Σ_k‖_F²; equals (τ² + ρ²/(ℓ−k−1))·‖Σ̄_k‖_F².
    pub fn core_expectation(&self) -> Result<f64> {
        require_gap(self.k, self.ell, 2, "the core expectation")?;
        let p1 = (self.ell - self.k - 1) as f64;
        Ok(self.tangent_sq + self.residual_sq * self.trace_inv / p1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub expectation_bound: f64,
    pub probability_bound: f64,
    pub u: f64,
    pub t: f64,
    pub delta: f64,
    pub optimal_error: f64,
}

fn require_gap(k: usize, ell: usize, gap: usize, what: &str) -> Result<()> {
    if k + gap > ell {
        return Err(Error::Hypothesis(format!(
            "{what} needs k <= ell - {gap}; got k = {k}, ell = {ell}"
        )));
    }
    Ok(())
}

/// Shared evaluation for a block split of a covariance factor.
///
/// `top` is the k×r block whose Gram matrix must be invertible, `bottom` the
/// block whose tangent and residual are measured, and `weight` the diagonal
/// applied on the right (Σ_k for the theorem, the identity otherwise).
fn block_coefficients(
    top: &DMatrix<f64>,
    bottom: &DMatrix<f64>,
    weight: &DVector<f64>,
    ell: usize,
    optimal_error: f64,
    max_cond: f64,
) -> Result<BoundCoefficients> {
    let (k, r) = top.shape();
    if r < k {
        return Err(Error::Hypothesis(format!(
            "K_k is singular: the covariance has rank at most {r} < k = {k}"
        )));
    }
    if optimal_error <= 0.0 {
        return Err(Error::Hypothesis(
            "optimal error is zero, so τ_k and ρ_k are undefined".into(),
        ));
    }
    let qr = top.transpose().qr();
    let q = qr.q();
    let r_fac = qr.r();
    let rsv = r_fac.singular_values();
    let (smax, smin) = (rsv.max(), rsv.min());
    let scale = top.norm().max(bottom.norm());
    let cond = if smin > rank_cutoff(k + bottom.nrows(), r, scale) {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if !(cond <= max_cond) {
        return Err(Error::Hypothesis(format!(
            "K_k is numerically singular (condition number {cond:e} > {max_cond:e})"
        )));
    }
    let x = r_fac
        .transpose()
        .solve_lower_triangular(&diag(weight))
        .ok_or_else(|| Error::Hypothesis("K_k is singular".into()))?;
    let bq = bottom * &q;
    let tangent_sq = (&bq * &x).norm_squared();
    let residual_sq = (bottom - &bq * q.transpose()).norm_squared();
    let trace_inv = x.norm_squared();
    Ok(BoundCoefficients {
        tau_k: tangent_sq.sqrt() / optimal_error,
        rho_k: (residual_sq * trace_inv).sqrt() / optimal_error,
        k,
        ell,
        cond_k_k: cond,
        tangent_sq,
        residual_sq,
        trace_inv,
        optimal_error,
    })
}

/// τ_k(K) and ρ_k(K) for the covariance `cov` of the sketch columns.
pub fn coefficients_tau_rho(
    part: &SvdPartition,
    cov: &CovarianceOperator,
    ell: usize,
) -> Result<BoundCoefficients> {
    coefficients_tau_rho_with_limit(part, cov, ell, MAX_COND_K_K)
}

/// [`coefficients_tau_rho`] with a caller-chosen ceiling on cond(K_k).
pub fn coefficients_tau_rho_with_limit(
    part: &SvdPartition,
    cov: &CovarianceOperator,
    ell: usize,
    max_cond: f64,
) -> Result<BoundCoefficients> {
    if cov.dim() != part.rows() {
        return Err(Error::Parameter(format!(
            "covariance dimension {} does not match m = {}",
            cov.dim(),
            part.rows()
        )));
    }
    if ell < part.k {
        return Err(Error::Parameter(format!("ell = {ell} is below k = {}", part.k)));
    }
    let top = part.u_k.tr_mul(&cov.factor);
    let bottom = part.u_bar_k.tr_mul(&cov.factor);
    block_coefficients(&top, &bottom, &part.sigma_k, ell, part.optimal_error(), max_cond)
}

/// Coefficients of K = A C Aᵀ computed in the right singular basis, for a
/// sketch Z = A G with columns of G drawn from N(0, C).
pub fn grsvd_coefficients(
    part: &SvdPartition,
    c: &CovarianceOperator,
    ell: usize,
) -> Result<BoundCoefficients> {
    if c.dim() != part.cols() {
        return Err(Error::Parameter(format!(
            "C has dimension {} but A has {} columns",
            c.dim(),
            part.cols()
        )));
    }
    if ell < part.k {
        return Err(Error::Parameter(format!("ell = {ell} is below k = {}", part.k)));
    }
    let top = part.v_k.tr_mul(&c.factor);
    let bottom = scale_rows(&part.v_bar_k.tr_mul(&c.factor), &part.sigma_bar_k, part.rows() - part.k);
    let ones = DVector::from_element(part.k, 1.0);
    block_coefficients(&top, &bottom, &ones, ell, part.optimal_error(), MAX_COND_K_K)
}

/// Σ̄_k · M for the rectangular (rows × M.nrows()) diagonal Σ̄_k.
fn scale_rows(m: &DMatrix<f64>, sigma: &DVector<f64>, rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, m.ncols());
    for (i, &s) in sigma.iter().enumerate() {
        out.row_mut(i).copy_from(&(m.row(i) * s));
    }
    out
}

/// Expectation bound `(1 + τ² + ρ²/(ℓ−k−1))^½ ‖Σ̄_k‖_F` (needs k ≤ ℓ−2).
pub fn expectation_bound(c: &BoundCoefficients) -> Result<f64> {
    require_gap(c.k, c.ell, 2, "the expectation bound")?;
    let p1 = (c.ell - c.k - 1) as f64;
    Ok((1.0 + c.tau_k * c.tau_k + c.rho_k * c.rho_k / p1).sqrt() * c.optimal_error)
}

/// Probability bound `(1 + τ + √3·u·t·ρ/√(ℓ−k+1)) ‖Σ̄_k‖_F` (needs k ≤ ℓ−4).
pub fn probability_bound(c: &BoundCoefficients, u: f64, t: f64) -> Result<f64> {
    require_gap(c.k, c.ell, 4, "the probability bound")?;
    let p = (c.ell - c.k + 1) as f64;
    Ok((1.0 + c.tau_k + 3f64.sqrt() * u * t * c.rho_k / p.sqrt()) * c.optimal_error)
}

/// Both bounds of the main theorem, with (u, t) chosen by [`solve_ut`].
pub fn theorem_bounds(coeffs: &BoundCoefficients, delta: f64) -> Result<BoundReport> {
    let expectation = expectation_bound(coeffs)?;
    require_gap(coeffs.k, coeffs.ell, 4, "the probability bound")?;
    let (u, t) = solve_ut(coeffs.ell, coeffs.k, delta)?;
    Ok(BoundReport {
        expectation_bound: expectation,
        probability_bound: probability_bound(coeffs, u, t)?,
        u,
        t,
        delta,
        optimal_error: coeffs.optimal_error,
    })
}

const UT_GRID: usize = 400;
const U_MAX: f64 = 12.0;
const T_MAX: f64 = 100.0;

fn log_grid(max: f64, i: usize) -> f64 {
    (max.ln() * i as f64 / (UT_GRID - 1) as f64).exp()
}

/// Minimizes u·t over a 400×400 logarithmic grid on [1, 12]×[1, 100] subject
/// to `exp(−u²/2) + t^(−(ℓ−k)) ≤ delta`.
pub fn solve_ut(ell: usize, k: usize, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    require_gap(k, ell, 4, "the probability bound")?;
    let p = (ell - k) as i32;
    let us: Vec<f64> = (0..UT_GRID).map(|i| log_grid(U_MAX, i)).collect();
    let mut best: Option<(f64, f64)> = None;
    for j in 0..UT_GRID {
        let t = log_grid(T_MAX, j);
        let slack = delta - t.powi(-p);
        if slack <= 0.0 {
            continue;
        }
        // Smallest feasible u for this t; u·t grows with u.
        if let Some(&u) = us.iter().find(|&&u| (-u * u / 2.0).exp() <= slack) {
            if best.is_none_or(|(bu, bt)| u * t < bu * bt) {
                best = Some((u, t));
            }
        }
    }
    best.ok_or(Error::Infeasible {
        delta,
        oversampling: ell - k,
    })
}

/// Factor `A (AᵀA)^q` of the power-iteration covariance K = A(AᵀA)^{2q}Aᵀ.
pub fn power_iteration_covariance(a: &DMatrix<f64>, q: u32) -> CovarianceOperator {
    let mut f = a.clone();
    for _ in 0..q {
        f = &f * a.tr_mul(a);
    }
    CovarianceOperator::from_factor(f, format!("A(AtA)^{q}"))
}

fn sigma_ratio_power(part: &SvdPartition, q: u32) -> Result<f64> {
    let sk = part.sigma_k_min();
    if sk <= 0.0 {
        return Err(Error::Degenerate {
            context: "σ_k vanishes in the power-iteration bound".into(),
            rank: part.sigma_k.iter().filter(|&&s| s > 0.0).count(),
            required: part.k,
        });
    }
    Ok((part.sigma_next() / sk).powi(2 * q as i32))
}

/// Expectation multiplier `1 + (σ_{k+1}/σ_k)^{2q} √(k/(ℓ−k−1))`.
pub fn power_iteration_expectation(part: &SvdPartition, q: u32, ell: usize) -> Result<f64> {
    require_gap(part.k, ell, 2, "the expectation bound")?;
    let r = sigma_ratio_power(part, q)?;
    let k = part.k as f64;
    Ok(1.0 + r * (k / (ell - part.k - 1) as f64).sqrt())
}

/// Probability multiplier `1 + √3·u·t·(σ_{k+1}/σ_k)^{2q} √(k/(ℓ−k+1))`.
pub fn power_iteration_probability(part: &SvdPartition, q: u32, ell: usize, u: f64, t: f64) -> Result<f64> {
    require_gap(part.k, ell, 4, "the probability bound")?;
    let r = sigma_ratio_power(part, q)?;
    let k = part.k as f64;
    Ok(1.0 + 3f64.sqrt() * u * t * r * (k / (ell - part.k + 1) as f64).sqrt())
}

/// Corollary bounds for K = A(AᵀA)^{2q}Aᵀ, as absolute values.
pub fn power_iteration_bounds(part: &SvdPartition, q: u32, ell: usize, delta: f64) -> Result<BoundReport> {
    let opt = part.optimal_error();
    let expectation = power_iteration_expectation(part, q, ell)? * opt;
    require_gap(part.k, ell, 4, "the probability bound")?;
    let (u, t) = solve_ut(ell, part.k, delta)?;
    Ok(BoundReport {
        expectation_bound: expectation,
        probability_bound: power_iteration_probability(part, q, ell, u, t)? * opt,
        u,
        t,
        delta,
        optimal_error: opt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrsvdBounds {
    pub report: BoundReport,
    pub coefficients: BoundCoefficients,
    pub beta_k: f64,
    pub gamma_k: f64,
}

/// Relaxed bounds for Z = A G, G ~ N(0, C), stated through β_k(C), γ_k(C).
pub fn grsvd_bounds(part: &SvdPartition, c: &CovarianceOperator, ell: usize, delta: f64) -> Result<GrsvdBounds> {
    let coeffs = grsvd_coefficients(part, c, ell)?;
    let lambda1 = c.factor.singular_values().max().powi(2);
    let opt = part.optimal_error();
    let k = part.k as f64;
    let tail = scale_rows(&part.v_bar_k.tr_mul(&c.factor), &part.sigma_bar_k, part.rows() - part.k);
    let beta = tail.norm_squared() / (lambda1 * opt * opt);
    let gamma = k / (lambda1 * coeffs.trace_inv);
    let ratio = beta / gamma;

    require_gap(part.k, ell, 4, "the probability bound")?;
    let p = (ell - part.k) as f64;
    let expectation = (1.0 + p.sqrt() * (k / (p - 1.0) * ratio).sqrt()) * opt;
    let (u, t) = solve_ut(ell, part.k, delta)?;
    let probability =
        (1.0 + 3f64.sqrt() * ((p + 1.0).sqrt() + 1.0) * (k / (p + 1.0) * ratio).sqrt() * u * t) * opt;
    Ok(GrsvdBounds {
        report: BoundReport {
            expectation_bound: expectation,
            probability_bound: probability,
            u,
            t,
            delta,
            optimal_error: opt,
        },
        coefficients: coeffs,
        beta_k: beta,
        gamma_k: gamma,
    })
}

/// Bounds quoted from earlier analyses of the randomized subspace iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineBounds {
    /// Halko–Martinsson–Tropp probability bound (absolute value).
    pub halko_prob: f64,
    /// Gu's expectation bound (absolute value).
    pub gu_expect: f64,
    /// Ratio between Gu's deviation term and ours.
    pub gu_factor_c: f64,
    /// (4e/3)(ℓ−k−1)
    pub gu_factor_lower: f64,
}

pub fn baseline_bounds(part: &SvdPartition, q: u32, ell: usize, u: f64, t: f64) -> Result<BaselineBounds> {
    require_gap(part.k, ell, 2, "the baseline bounds")?;
    let e = std::f64::consts::E;
    let (k, l, n) = (part.k as f64, ell as f64, part.cols() as f64);
    let opt = part.optimal_error();
    let s1 = part.sigma_next();
    let r = sigma_ratio_power(part, q)?;
    let bracket = (n - k).sqrt() + l.sqrt() + 7.0;
    let halko_prob = (1.0 + t * (3.0 * k / (l - k + 1.0)).sqrt()) * opt + u * t * e * l.sqrt() / (l - k + 1.0).sqrt() * s1;
    let gu_expect = (1.0 + k.sqrt() * r * 4.0 * e * l.sqrt() / (l - k + 1.0) * bracket * s1 / opt) * opt;
    let gu_factor_c = 4.0 * e * l.sqrt() * (l - k - 1.0).sqrt() / (l - k + 1.0) * bracket * s1 / opt;
    Ok(BaselineBounds {
        halko_prob,
        gu_expect,
        gu_factor_c,
        gu_factor_lower: 4.0 * e / 3.0 * (l - k - 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{svd_partition, symmetric_eigen_sorted, tangent_matrix};
    use crate::sampling::covariance_from_matrix;
    use crate::testutil::{random_gaussian, random_orthonormal, with_spectrum};

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let g = random_gaussian(n, n, seed);
        &g * g.transpose() + DMatrix::identity(n, n) * 0.5
    }

    /// Direct evaluation of τ and ρ from explicit K, K_k⁻¹ and the tangent.
    fn naive_tau_rho(part: &SvdPartition, k_mat: &DMatrix<f64>) -> (f64, f64) {
        let kk = part.u_k.tr_mul(&(k_mat * &part.u_k));
        let kk_inv = kk.clone().try_inverse().unwrap();
        let tan = tangent_matrix(&part.u_k, &(k_mat * &part.u_k)).unwrap();
        let tau = (tan * diag(&part.sigma_k)).norm() / part.optimal_error();
        let ku = k_mat * &part.u_k;
        let first = k_mat.trace() - (&kk_inv * ku.tr_mul(&ku)).trace();
        let s2 = diag(&part.sigma_k.map(|s| s * s));
        let second = (s2 * kk_inv).trace();
        (tau, (first * second).sqrt() / part.optimal_error())
    }

    #[test]
    fn matches_explicit_formulas() {
        for seed in 0..5 {
            let a = random_gaussian(12, 9, seed);
            let part = svd_partition(&a, 3).unwrap();
            let k_mat = spd(12, 100 + seed);
            let cov = covariance_from_matrix(&k_mat).unwrap();
            let c = coefficients_tau_rho(&part, &cov, 8).unwrap();
            let (tau, rho) = naive_tau_rho(&part, &k_mat);
            assert!((c.tau_k - tau).abs() < 1e-8 * tau.max(1.0));
            assert!((c.rho_k - rho).abs() < 1e-8 * rho.max(1.0));
        }
    }

    #[test]
    fn optimal_covariance_zeroes_both() {
        let a = random_gaussian(10, 8, 1);
        let part = svd_partition(&a, 3).unwrap();
        let delta = spd(3, 2);
        let cov = CovarianceOperator::from_factor(&part.u_k * delta.cholesky().unwrap().l(), "UΔU");
        let c = coefficients_tau_rho(&part, &cov, 6).unwrap();
        assert!(c.tau_k <= 1e-8 && c.rho_k <= 1e-8, "{c:?}");
    }

    #[test]
    fn power_covariance_has_zero_tau() {
        let sigma: Vec<f64> = (0..10).map(|i| 2.0 - 0.15 * i as f64).collect();
        let a = with_spectrum(14, 10, &sigma, 4);
        let part = svd_partition(&a, 4).unwrap();
        for q in 0..4 {
            let c = coefficients_tau_rho(&part, &power_iteration_covariance(&a, q), 8).unwrap();
            assert!(c.tau_k <= 1e-8, "q = {q}: τ = {}", c.tau_k);
            let cap = 2.0 * (part.sigma_next() / part.sigma_k_min()).powi(2 * q as i32);
            assert!(c.rho_k <= cap * (1.0 + 1e-8));
        }
    }

    #[test]
    fn identity_covariance_hand_case() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]));
        let part = svd_partition(&a, 2).unwrap();
        let c = coefficients_tau_rho(&part, &CovarianceOperator::identity(4), 8).unwrap();
        let opt = 2f64.sqrt();
        assert!(c.tau_k.abs() < 1e-12);
        assert!((c.rho_k - 2.0 / opt).abs() < 1e-12);
        let e = expectation_bound(&c).unwrap();
        assert!((e - (1.4f64).sqrt() * opt).abs() < 1e-12);
        assert!((e - 1.6733).abs() < 1e-4);
        assert!((c.core_expectation().unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_give_optimal_bounds() {
        let a = random_gaussian(12, 10, 3);
        let part = svd_partition(&a, 2).unwrap();
        let cov = CovarianceOperator::from_factor(part.u_k.clone(), "U_k");
        let c = coefficients_tau_rho(&part, &cov, 10).unwrap();
        let r = theorem_bounds(&c, 1e-3).unwrap();
        let opt = part.optimal_error();
        assert!((r.expectation_bound - opt).abs() < 1e-12 * opt);
        assert!((r.probability_bound - opt).abs() < 1e-9 * opt);
    }

    #[test]
    fn expectation_nonincreasing_in_ell() {
        let a = random_gaussian(40, 30, 5);
        let part = svd_partition(&a, 5).unwrap();
        let cov = CovarianceOperator::identity(40);
        let mut prev = f64::INFINITY;
        for ell in 7..30 {
            let e = expectation_bound(&coefficients_tau_rho(&part, &cov, ell).unwrap()).unwrap();
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn gap_hypotheses_are_named() {
        let a = random_gaussian(10, 10, 6);
        let part = svd_partition(&a, 4).unwrap();
        let cov = CovarianceOperator::identity(10);
        let c = coefficients_tau_rho(&part, &cov, 5).unwrap();
        match expectation_bound(&c) {
            Err(Error::Hypothesis(msg)) => assert!(msg.contains("expectation")),
            other => panic!("{other:?}"),
        }
        let c = coefficients_tau_rho(&part, &cov, 7).unwrap();
        assert!(expectation_bound(&c).is_ok());
        match theorem_bounds(&c, 1e-3) {
            Err(Error::Hypothesis(msg)) => assert!(msg.contains("probability")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn singular_k_k_is_a_hypothesis_violation() {
        let a = random_gaussian(8, 8, 7);
        let part = svd_partition(&a, 3).unwrap();
        let cov = CovarianceOperator::from_factor(part.u_bar_k.clone(), "Ū_k");
        assert!(matches!(coefficients_tau_rho(&part, &cov, 6), Err(Error::Hypothesis(_))));
        let thin = CovarianceOperator::from_factor(random_gaussian(8, 2, 8), "rank2");
        assert!(matches!(coefficients_tau_rho(&part, &thin, 6), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn scale_invariance() {
        let a = random_gaussian(15, 12, 9);
        let part = svd_partition(&a, 4).unwrap();
        let cov = CovarianceOperator::from_factor(random_gaussian(15, 15, 10), "F");
        let c1 = coefficients_tau_rho(&part, &cov, 10).unwrap();
        let c2 = coefficients_tau_rho(&part, &cov.scaled(7.3), 10).unwrap();
        assert!((c1.tau_k - c2.tau_k).abs() < 1e-9 * c1.tau_k.max(1.0));
        assert!((c1.rho_k - c2.rho_k).abs() < 1e-9 * c1.rho_k.max(1.0));
    }

    #[test]
    fn solve_ut_large_oversampling() {
        let (u, t) = solve_ut(110, 10, 1e-3).unwrap();
        assert!(t < 1.15, "t = {t}");
        assert!((u - (2.0 * 2000f64.ln()).sqrt()).abs() < 0.3, "u = {u}");
        assert!((-u * u / 2.0).exp() + t.powi(-100) <= 1e-3);
    }

    #[test]
    fn solve_ut_slack_budget_approaches_corner() {
        // (1, 1) itself is infeasible for every delta < 1 since e^{-1/2} + 1 > 1.
        let (u, t) = solve_ut(20, 10, 0.999).unwrap();
        assert!(u * t < 1.2, "u·t = {}", u * t);
        let mut prev = f64::INFINITY;
        for delta in [1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9, 0.999] {
            let (u, t) = solve_ut(20, 10, delta).unwrap();
            assert!(u * t <= prev);
            prev = u * t;
        }
    }

    #[test]
    fn solve_ut_minimal_gap_is_tight() {
        let p = 4;
        let delta = 1e-3;
        let (u, t) = solve_ut(14, 10, delta).unwrap();
        let g = |u: f64, t: f64| (-u * u / 2.0).exp() + t.powi(-p);
        assert!(g(u, t) <= delta);
        let step_u = (U_MAX.ln() / (UT_GRID - 1) as f64).exp();
        let step_t = (T_MAX.ln() / (UT_GRID - 1) as f64).exp();
        assert!(g(u / step_u, t) > delta);
        assert!(g(u, t / step_t) > delta);
    }

    #[test]
    fn solve_ut_rejects_bad_input() {
        assert!(solve_ut(14, 10, 0.0).is_err());
        assert!(solve_ut(13, 10, 0.5).is_err());
        assert!(matches!(solve_ut(14, 10, 1e-12), Err(Error::Infeasible { oversampling: 4, .. })));
    }

    #[test]
    fn power_iteration_multipliers() {
        let mut sigma = vec![1.0; 5];
        sigma.extend([0.5; 15]);
        let a = with_spectrum(25, 20, &sigma, 11);
        let part = svd_partition(&a, 5).unwrap();
        let m = power_iteration_expectation(&part, 3, 15).unwrap();
        assert!((m - (1.0 + (5f64 / 9.0).sqrt() / 64.0)).abs() < 1e-10);
        assert!((m - 1.01165).abs() < 1e-5);
        let halko = 1.0 + (5f64 / 9.0).sqrt();
        assert!((power_iteration_expectation(&part, 0, 15).unwrap() - halko).abs() < 1e-12);
    }

    #[test]
    fn equal_gap_makes_q_irrelevant() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5]));
        let part = svd_partition(&a, 2).unwrap();
        let m0 = power_iteration_expectation(&part, 0, 6).unwrap();
        for q in 1..5 {
            assert_eq!(power_iteration_expectation(&part, q, 6).unwrap(), m0);
        }
    }

    #[test]
    fn sigma_k_zero_is_degenerate() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let part = svd_partition(&a, 2).unwrap();
        assert!(matches!(power_iteration_expectation(&part, 1, 5), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn theorem_never_exceeds_power_corollary() {
        for seed in 0..100 {
            let n = 10 + (seed as usize % 7);
            let k = 1 + (seed as usize % 3);
            let ell = k + 4 + (seed as usize % 3);
            let sigma: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64 + 0.1 * seed as f64)).collect();
            let a = with_spectrum(n, n, &sigma, 500 + seed);
            let part = svd_partition(&a, k).unwrap();
            for q in 0..2 {
                let c = coefficients_tau_rho(&part, &power_iteration_covariance(&a, q), ell).unwrap();
                let th = theorem_bounds(&c, 1e-3).unwrap();
                let pi = power_iteration_bounds(&part, q, ell, 1e-3).unwrap();
                assert!(th.expectation_bound <= pi.expectation_bound * (1.0 + 1e-9));
                assert!(th.probability_bound <= pi.probability_bound * (1.0 + 1e-9));
                if q == 0 {
                    assert!((c.rho_k - (k as f64).sqrt()).abs() < 1e-9 * c.rho_k);
                }
            }
        }
    }

    #[test]
    fn flat_spectrum_makes_power_corollary_tight() {
        let mut sigma = vec![2.0; 3];
        sigma.extend([0.7; 9]);
        let a = with_spectrum(12, 12, &sigma, 21);
        let part = svd_partition(&a, 3).unwrap();
        let c = coefficients_tau_rho(&part, &power_iteration_covariance(&a, 1), 9).unwrap();
        let cap = 3f64.sqrt() * (part.sigma_next() / part.sigma_k_min()).powi(2);
        assert!((c.rho_k - cap).abs() < 1e-9 * cap);
        let th = expectation_bound(&c).unwrap();
        let pi = power_iteration_bounds(&part, 1, 9, 1e-3).unwrap();
        assert!(th <= pi.expectation_bound);
    }

    #[test]
    fn grsvd_identity_matches_gram_covariance() {
        let a = random_gaussian(14, 11, 12);
        let part = svd_partition(&a, 3).unwrap();
        let g = grsvd_coefficients(&part, &CovarianceOperator::identity(11), 8).unwrap();
        let t = coefficients_tau_rho(&part, &CovarianceOperator::from_factor(a.clone(), "A"), 8).unwrap();
        assert!((g.tau_k - t.tau_k).abs() < 1e-8);
        assert!((g.rho_k - t.rho_k).abs() < 1e-8);
        let b = grsvd_bounds(&part, &CovarianceOperator::identity(11), 8, 1e-3).unwrap();
        assert!((b.beta_k - 1.0).abs() < 1e-12);
        assert!((b.gamma_k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grsvd_matches_theorem_for_general_c() {
        let a = random_gaussian(13, 10, 13);
        let part = svd_partition(&a, 3).unwrap();
        let g_fac = random_gaussian(10, 10, 14);
        let c = CovarianceOperator::from_factor(g_fac.clone(), "C");
        let g = grsvd_coefficients(&part, &c, 9).unwrap();
        let k = CovarianceOperator::from_factor(&a * g_fac, "ACAᵀ");
        let t = coefficients_tau_rho(&part, &k, 9).unwrap();
        assert!((g.tau_k - t.tau_k).abs() < 1e-8 * t.tau_k.max(1.0));
        assert!((g.rho_k - t.rho_k).abs() < 1e-8 * t.rho_k.max(1.0));
    }

    #[test]
    fn grsvd_aligned_c_has_zero_tau() {
        let a = random_gaussian(12, 9, 15);
        let part = svd_partition(&a, 3).unwrap();
        let c = CovarianceOperator::from_factor(&part.v_k * diag(&part.sigma_k), "A_kᵀA_k");
        let g = grsvd_coefficients(&part, &c, 7).unwrap();
        assert!(g.tau_k < 1e-10);
        assert!(g.residual_sq < 1e-20 * part.optimal_error().powi(2).max(1.0));

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let part = svd_partition(&d, 1).unwrap();
        let c = covariance_from_matrix(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1e-3]))).unwrap();
        assert!(grsvd_coefficients(&part, &c, 3).unwrap().tau_k < 1e-12);
    }

    #[test]
    fn beta_gamma_scale_invariant() {
        let a = random_gaussian(12, 10, 16);
        let part = svd_partition(&a, 2).unwrap();
        let c = CovarianceOperator::from_factor(random_gaussian(10, 10, 17), "C");
        let b1 = grsvd_bounds(&part, &c, 8, 1e-3).unwrap();
        let b2 = grsvd_bounds(&part, &c.scaled(0.05), 8, 1e-3).unwrap();
        assert!((b1.beta_k - b2.beta_k).abs() < 1e-10 * b1.beta_k);
        assert!((b1.gamma_k - b2.gamma_k).abs() < 1e-10 * b1.gamma_k);
    }

    #[test]
    fn grsvd_corollary_relaxes_theorem() {
        for seed in 0..100u64 {
            let (m, n) = (10 + seed as usize % 5, 8 + seed as usize % 4);
            let k = 1 + seed as usize % 3;
            let ell = k + 4 + seed as usize % 4;
            if ell > m.min(n) {
                continue;
            }
            let a = random_gaussian(m, n, 1000 + seed);
            let part = svd_partition(&a, k).unwrap();
            let c = CovarianceOperator::from_factor(random_gaussian(n, n, 2000 + seed), "C");
            let b = grsvd_bounds(&part, &c, ell, 1e-3).unwrap();
            let th = theorem_bounds(&b.coefficients, 1e-3).unwrap();
            assert!(th.expectation_bound <= b.report.expectation_bound * (1.0 + 1e-12));
            assert!(th.probability_bound <= b.report.probability_bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn trace_inequality_squared_form() {
        for seed in 0..20 {
            let kk = spd(5, 300 + seed);
            let sigma = random_gaussian(5, 1, 400 + seed).map(|x| x.abs() + 0.1);
            let s2 = diag(&sigma.column(0).map(|s| s * s));
            let lhs = (&s2 * kk.clone().try_inverse().unwrap()).trace();
            let lmin = symmetric_eigen_sorted(&kk).0.min();
            assert!(lhs <= sigma.norm_squared() / lmin * (1.0 + 1e-12));
        }
        // The unsquared norm fails as soon as Σ_k is large.
        let lhs = 100.0 * 2.0;
        let unsquared = (2.0f64 * 100.0).sqrt();
        assert!(lhs > unsquared);
    }

    #[test]
    fn baselines() {
        let a = with_spectrum(30, 30, &(0..30).map(|i| 0.9f64.powi(i)).collect::<Vec<_>>(), 18);
        let part = svd_partition(&a, 10).unwrap();
        let b = baseline_bounds(&part, 0, 20, 2.0, 2.0).unwrap();
        assert!((b.gu_factor_lower - 4.0 * std::f64::consts::E / 3.0 * 9.0).abs() < 1e-12);
        assert!((b.gu_factor_lower - 32.62).abs() < 0.01);
        assert!(b.halko_prob > part.optimal_error());
        assert!(b.gu_expect > part.optimal_error());
    }

    #[test]
    fn flat_tail_norm_equivalence() {
        let mut sigma = vec![3.0, 2.5];
        sigma.extend([0.4; 8]);
        let a = with_spectrum(10, 10, &sigma, 19);
        let part = svd_partition(&a, 2).unwrap();
        assert!((part.optimal_error() - 0.4 * 8f64.sqrt()).abs() < 1e-10);
        // Gu's factor then reduces to 4e√ℓ√(ℓ−k−1)/(ℓ−k+1)·(√(n−k)+√ℓ+7)/√(n−k).
        let b = baseline_bounds(&part, 0, 6, 1.0, 1.0).unwrap();
        let e = std::f64::consts::E;
        let want = 4.0 * e * 6f64.sqrt() * 3f64.sqrt() / 5.0 * (8f64.sqrt() + 6f64.sqrt() + 7.0) / 8f64.sqrt();
        assert!((b.gu_factor_c - want).abs() < 1e-9 * want);
    }

    #[test]
    fn u_k_tangent_consistency_through_random_rotation() {
        let a = random_gaussian(9, 9, 20);
        let part = svd_partition(&a, 2).unwrap();
        let f = random_gaussian(9, 9, 22);
        let rot = random_orthonormal(9, 9, 23);
        let c1 = coefficients_tau_rho(&part, &CovarianceOperator::from_factor(f.clone(), "F"), 6).unwrap();
        let c2 = coefficients_tau_rho(&part, &CovarianceOperator::from_factor(f * rot, "FR"), 6).unwrap();
        assert!((c1.tau_k - c2.tau_k).abs() < 1e-9 * c1.tau_k.max(1.0));
        assert!((c1.rho_k - c2.rho_k).abs() < 1e-9 * c1.rho_k.max(1.0));
    }
}
