//! Brute-force Monte Carlo checks of the stochastic machinery behind the
//! bounds: the conditional Gaussian split of a sketch in the U basis, the
//! inverse-Wishart mean, the core expectation identity and the deterministic
//! bound.
//!
//! Nothing here goes through the factor algebra of [`crate::bounds`]; the
//! closed forms are assembled from explicit covariance blocks and inverses.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grsvd::neumaier_sum;
use crate::linalg::{diag, numerical_rank, pinv, residual_with_basis, svd_partition, symmetric_eigen_sorted, thin_svd, SvdPartition};
use crate::sampling::{matrix_with_spectrum, standard_normal_matrix, CovarianceOperator, SeedSpec};

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Resampled draws use streams offset by this so they never meet the direct ones.
const RESAMPLE_STREAMS: u64 = 1 << 62;

/// Law of Ū_kᵀZ given U_kᵀZ: columns are N(mean_map·z_k, schur).
#[derive(Debug, Clone)]
pub struct ConditionalGaussianParams {
    /// K_{⊥,k} K_k⁻¹
    pub mean_map: DMatrix<f64>,
    /// K/K_k = K̄_k − K_{⊥,k} K_k⁻¹ K_{⊥,k}ᵀ
    pub schur: DMatrix<f64>,
    /// K_k = U_kᵀ K U_k
    pub k_k: DMatrix<f64>,
}

impl ConditionalGaussianParams {
    /// Symmetric square root of the Schur complement, clipping eigenvalues
    /// above −1e-10·λ_max to zero.
    pub fn schur_sqrt(&self) -> Result<DMatrix<f64>> {
        let (vals, vecs) = symmetric_eigen_sorted(&self.schur);
        let lmax = vals.iter().copied().fold(0.0f64, f64::max);
        let mut roots = DVector::zeros(vals.len());
        for (i, &l) in vals.iter().enumerate() {
            if l < -1e-10 * lmax {
                return Err(Error::NotPsd {
                    min_eigenvalue: l,
                    max_eigenvalue: lmax,
                });
            }
            roots[i] = l.max(0.0).sqrt();
        }
        Ok(&vecs * diag(&roots) * vecs.transpose())
    }
}

pub fn conditional_params(part: &SvdPartition, cov: &CovarianceOperator) -> Result<ConditionalGaussianParams> {
    let k_mat = cov.matrix();
    let k_k = part.u_k.tr_mul(&(&k_mat * &part.u_k));
    let k_perp = part.u_bar_k.tr_mul(&(&k_mat * &part.u_k));
    let k_bar = part.u_bar_k.tr_mul(&(&k_mat * &part.u_bar_k));
    let inv = spd_inverse(&k_k)?;
    let mean_map = &k_perp * &inv;
    let mut schur = k_bar - &mean_map * k_perp.transpose();
    schur = (&schur + schur.transpose()) * 0.5;
    Ok(ConditionalGaussianParams { mean_map, schur, k_k })
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = m.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-13 * smax) {
        return Err(Error::Hypothesis(format!(
            "K_k is singular (eigenvalues in [{smin:e}, {smax:e}])"
        )));
    }
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Hypothesis("K_k is not positive definite".into()))
}

/// The sketch split along [U_k Ū_k].
#[derive(Debug, Clone)]
pub struct SketchBlocks {
    pub z_k: DMatrix<f64>,
    pub z_bar_k: DMatrix<f64>,
    /// Z̄_k Z_k⁺
    pub t_k: DMatrix<f64>,
}

impl SketchBlocks {
    pub fn new(part: &SvdPartition, z: &DMatrix<f64>) -> Result<Self> {
        let z_k = part.u_k.tr_mul(z);
        let z_bar_k = part.u_bar_k.tr_mul(z);
        if numerical_rank(&z_k) < part.k {
            return Err(Error::Hypothesis("U_kᵀZ does not have full row rank".into()));
        }
        let t_k = &z_bar_k * pinv(&z_k);
        Ok(Self { z_k, z_bar_k, t_k })
    }
}

/// Closed form of E‖Z̄_kZ_k⁺Σ_k‖_F² from the explicit blocks:
/// ‖K_{⊥,k}K_k⁻¹Σ_k‖² + tr(K/K_k)·tr(Σ_kK_k⁻¹Σ_k)/(ℓ−k−1).
pub fn core_closed_form(part: &SvdPartition, params: &ConditionalGaussianParams, ell: usize) -> Result<f64> {
    let k = part.k;
    if ell < k + 2 {
        return Err(Error::Hypothesis(format!("need ell >= k + 2, got k = {k}, ell = {ell}")));
    }
    let s = diag(&part.sigma_k);
    let inv = spd_inverse(&params.k_k)?;
    let first = (&params.mean_map * &s).norm_squared();
    let second = params.schur.trace() * (&s * inv * &s).trace() / (ell - k - 1) as f64;
    Ok(first + second)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_used: usize,
    /// Samples with numerically rank-deficient U_kᵀZ (a probability-zero event).
    pub n_rejected: usize,
    pub closed_form: f64,
}

impl McEstimate {
    /// |mean − closed form| in standard errors.
    pub fn z_score(&self) -> f64 {
        let d = (self.mean - self.closed_form).abs();
        if self.std_err > 0.0 {
            d / self.std_err
        } else if d <= 1e-12 * self.closed_form.abs().max(1e-300) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = neumaier_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// ‖Z̄_kZ_k⁺Σ_k‖_F² for one sketch block pair, `None` if Z_kZ_kᵀ is not
/// numerically positive definite.
fn core_value(z_k: &DMatrix<f64>, z_bar: &DMatrix<f64>, sigma_k: &DVector<f64>) -> Option<f64> {
    let gram = z_k * z_k.transpose();
    let chol = Cholesky::<f64, Dyn>::new(gram)?;
    let x = z_k.transpose() * chol.solve(&diag(sigma_k));
    let v = (z_bar * x).norm_squared();
    v.is_finite().then_some(v)
}

/// Per-sample values of ‖Z̄_kZ_k⁺Σ_k‖_F² with Z = FΩ, sample i on stream i.
fn core_samples(part: &SvdPartition, cov: &CovarianceOperator, ell: usize, n: usize, seed: SeedSpec) -> Vec<Option<f64>> {
    let f_k = part.u_k.tr_mul(&cov.factor);
    let f_bar = part.u_bar_k.tr_mul(&cov.factor);
    let r = cov.inner_dim();
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let omega = standard_normal_matrix(r, ell, seed.with_stream(seed.stream_id.wrapping_add(i)));
            core_value(&(&f_k * &omega), &(&f_bar * &omega), &part.sigma_k)
        })
        .collect()
}

fn check_samples(n_samples: usize, min: usize) -> Result<()> {
    if n_samples < min {
        return Err(Error::Parameter(format!("need at least {min} samples, got {n_samples}")));
    }
    Ok(())
}

/// Monte Carlo estimate of E‖Z̄_kZ_k⁺Σ_k‖_F² against its closed form.
pub fn mc_core_expectation(
    part: &SvdPartition,
    cov: &CovarianceOperator,
    ell: usize,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<McEstimate> {
    check_samples(n_samples, 1000)?;
    if cov.dim() != part.rows() {
        return Err(Error::Parameter("covariance dimension does not match A".into()));
    }
    let params = conditional_params(part, cov)?;
    let closed_form = core_closed_form(part, &params, ell)?;
    let vals: Vec<f64> = core_samples(part, cov, ell, n_samples, seed).into_iter().flatten().collect();
    if vals.is_empty() {
        return Err(Error::Degenerate {
            context: "every sample of U_kᵀZ".into(),
            rank: 0,
            required: part.k,
        });
    }
    let (mean, std_err) = mean_and_se(&vals);
    Ok(McEstimate {
        mean,
        std_err,
        n_used: vals.len(),
        n_rejected: n_samples - vals.len(),
        closed_form,
    })
}

/// Tail bound on ‖Z̄_kZ_k⁺Σ_k‖_F in the stochastic form, with
/// √(tr(Σ_k²K_k⁻¹)/(ℓ−k−1)), holding with probability ≥ 1 − e^{−u²/2} − t^{−(ℓ−k)}.
pub fn proposition_tail_bound(part: &SvdPartition, params: &ConditionalGaussianParams, ell: usize, u: f64, t: f64) -> Result<f64> {
    let k = part.k;
    if ell < k + 4 {
        return Err(Error::Hypothesis(format!("need ell >= k + 4, got k = {k}, ell = {ell}")));
    }
    let s = diag(&part.sigma_k);
    let inv = spd_inverse(&params.k_k)?;
    let tangent = (&params.mean_map * &s).norm();
    let trace_inv = (&s * inv * &s).trace();
    Ok(tangent + 3f64.sqrt() * u * t * params.schur.trace().max(0.0).sqrt() * (trace_inv / (ell - k - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCheck {
    pub fraction: f64,
    /// e^{−u²/2} + t^{−(ℓ−k)}
    pub allowed: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

/// Fraction of sketches whose ‖Z̄_kZ_k⁺Σ_k‖_F exceeds the tail bound.
pub fn mc_tail_exceedance(
    part: &SvdPartition,
    cov: &CovarianceOperator,
    ell: usize,
    u: f64,
    t: f64,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<ExceedanceCheck> {
    check_samples(n_samples, 1000)?;
    let params = conditional_params(part, cov)?;
    let bound = proposition_tail_bound(part, &params, ell, u, t)?;
    let samples = core_samples(part, cov, ell, n_samples, seed);
    // A rejected sample has an unbounded Z_k⁺ and counts as an exceedance.
    let exceed = samples.iter().filter(|v| v.is_none_or(|x| x.sqrt() > bound)).count();
    let allowed = (-u * u / 2.0).exp() + t.powi(-((ell - part.k) as i32));
    let q = allowed.min(1.0);
    Ok(ExceedanceCheck {
        fraction: exceed as f64 / n_samples as f64,
        allowed,
        std_err: (q * (1.0 - q) / n_samples as f64).sqrt(),
        n_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WishartCheck {
    pub target: DMatrix<f64>,
    pub mean: DMatrix<f64>,
    /// Largest |mean − target| over the entries.
    pub max_deviation: f64,
    /// Standard error of the entry attaining `max_deviation`.
    pub std_err: f64,
    /// Largest |mean − target| / SE over the entries.
    pub max_z: f64,
    /// Every entry within 4 standard errors.
    pub passes: bool,
}

/// Mean of (Z_kZ_kᵀ)⁻¹ for Z_k with ℓ i.i.d. N(0, K_k) columns, against
/// K_k⁻¹/(ℓ−k−1).
pub fn wishart_inverse_check(k: usize, ell: usize, k_k: &DMatrix<f64>, n_samples: usize, seed: SeedSpec) -> Result<WishartCheck> {
    if k_k.shape() != (k, k) {
        return Err(Error::Parameter(format!("K_k must be {k}x{k}, got {:?}", k_k.shape())));
    }
    if ell < k + 2 {
        return Err(Error::Parameter(format!("need ell > k + 1, got k = {k}, ell = {ell}")));
    }
    check_samples(n_samples, 2)?;
    let chol = Cholesky::new(k_k.clone()).ok_or_else(|| Error::Parameter("K_k must be positive definite".into()))?;
    let target = chol.inverse() / (ell - k - 1) as f64;
    let l = chol.l();
    let draws: Vec<Option<DMatrix<f64>>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let z = &l * standard_normal_matrix(k, ell, seed.with_stream(seed.stream_id.wrapping_add(i)));
            Cholesky::new(&z * z.transpose()).map(|c| c.inverse())
        })
        .collect();
    let draws: Vec<DMatrix<f64>> = draws.into_iter().flatten().collect();
    let mut mean = DMatrix::zeros(k, k);
    let mut check = (0.0f64, 0.0f64, 0.0f64, true);
    for i in 0..k {
        for j in 0..k {
            let vals: Vec<f64> = draws.iter().map(|d| d[(i, j)]).collect();
            let (m, se) = mean_and_se(&vals);
            mean[(i, j)] = m;
            let dev = (m - target[(i, j)]).abs();
            let z = if se > 0.0 { dev / se } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
            if dev > check.0 {
                check.0 = dev;
                check.1 = se;
            }
            check.2 = check.2.max(z);
            check.3 &= z <= 4.0;
        }
    }
    Ok(WishartCheck {
        target,
        mean,
        max_deviation: check.0,
        std_err: check.1,
        max_z: check.2,
        passes: check.3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicCheck {
    /// ‖(I − π(Z))A‖_F²
    pub lhs_sq: f64,
    /// ‖Σ̄_k‖_F² + ‖Z̄_kZ_k⁺Σ_k‖_F²
    pub rhs_sq: f64,
    pub holds: bool,
}

pub fn deterministic_bound_check(a: &DMatrix<f64>, z: &DMatrix<f64>, k: usize) -> Result<DeterministicCheck> {
    if z.nrows() != a.nrows() {
        return Err(Error::Parameter("Z must have as many rows as A".into()));
    }
    if numerical_rank(z) < z.ncols() {
        return Err(Error::Hypothesis("Z does not have full column rank".into()));
    }
    let part = svd_partition(a, k)?;
    let blocks = SketchBlocks::new(&part, z)?;
    let (q, _, _) = thin_svd(z);
    let lhs = residual_with_basis(a, &q);
    let opt = part.optimal_error();
    let rhs_sq = opt * opt + (&blocks.t_k * diag(&part.sigma_k)).norm_squared();
    let lhs_sq = lhs * lhs;
    Ok(DeterministicCheck {
        lhs_sq,
        rhs_sq,
        holds: lhs_sq <= rhs_sq * (1.0 + 1e-10),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest {
    /// Kolmogorov–Smirnov distance between the two empirical laws.
    pub statistic: f64,
    pub p_value: f64,
    pub n_samples: usize,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> TwoSampleTest {
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let en = (n1 * n2 / (n1 + n2)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    TwoSampleTest {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n_samples: x.len().min(y.len()),
    }
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Compares ‖Z̄_kZ_k⁺‖_F² under direct sampling Z = FΩ and under
/// Z̄_k = mean_map·Z_k + (K/K_k)^½ G.
pub fn conditional_resampling_test(
    part: &SvdPartition,
    cov: &CovarianceOperator,
    ell: usize,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<TwoSampleTest> {
    check_samples(n_samples, 10)?;
    let params = conditional_params(part, cov)?;
    let root = params.schur_sqrt()?;
    let f_k = part.u_k.tr_mul(&cov.factor);
    let f_bar = part.u_bar_k.tr_mul(&cov.factor);
    let (r, nk) = (cov.inner_dim(), root.nrows());
    let ones = DVector::from_element(part.k, 1.0);
    let stream = |i: u64, off: u64| seed.with_stream(seed.stream_id.wrapping_add(i).wrapping_add(off));
    let direct: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let om = standard_normal_matrix(r, ell, stream(i, 0));
            core_value(&(&f_k * &om), &(&f_bar * &om), &ones)
        })
        .collect();
    let resampled: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let z_k = &f_k * standard_normal_matrix(r, ell, stream(i, RESAMPLE_STREAMS));
            let g = standard_normal_matrix(nk, ell, stream(i, RESAMPLE_STREAMS | (1 << 61)));
            let z_bar = &params.mean_map * &z_k + &root * g;
            core_value(&z_k, &z_bar, &ones)
        })
        .collect();
    Ok(ks_two_sample(&direct, &resampled))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub statistic: f64,
    pub target: f64,
    pub std_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n_samples: usize,
    pub base_seed: u64,
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Random SPD matrix G Gᵀ/n + shift·I.
pub fn random_spd(n: usize, shift: f64, seed: SeedSpec) -> DMatrix<f64> {
    let g = standard_normal_matrix(n, n, seed);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * shift
}

/// Matrix with geometrically decaying spectrum σ_i = decay^i.
pub fn random_decaying(m: usize, n: usize, decay: f64, seed: SeedSpec) -> DMatrix<f64> {
    let sigma: Vec<f64> = (0..m.min(n)).map(|i| decay.powi(i as i32)).collect();
    matrix_with_spectrum(m, n, &sigma, seed)
}

fn mc_check(name: &str, est: McEstimate) -> OracleCheck {
    OracleCheck {
        name: name.into(),
        statistic: est.mean,
        target: est.closed_form,
        std_err: est.std_err,
        pass: est.z_score() <= 4.0,
    }
}

/// The checks run by the `oracle` subcommand.
pub fn run_default_suite(n_samples: usize, base_seed: u64) -> Result<OracleReport> {
    let seed = |stream: u64| SeedSpec::new(base_seed, stream << 32);
    let mut checks = Vec::new();

    let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 1.0, 0.5, 0.25]));
    let part = svd_partition(&a, 2)?;
    let est = mc_core_expectation(&part, &CovarianceOperator::identity(4), 8, n_samples, seed(1))?;
    checks.push(mc_check("core_expectation_identity_n4_k2_l8", est));

    let a = random_decaying(20, 20, 0.8, seed(2));
    let part = svd_partition(&a, 4)?;
    let cov = CovarianceOperator::from_factor(random_spd(20, 0.1, seed(3)).cholesky().expect("SPD").l(), "K");
    let est = mc_core_expectation(&part, &cov, 10, n_samples, seed(4))?;
    checks.push(mc_check("core_expectation_random_n20_k4_l10", est));

    let u = 2.0;
    let ex = mc_tail_exceedance(&part, &cov, 10, u, u, n_samples, seed(5))?;
    checks.push(OracleCheck {
        name: "tail_bound_exceedance_u2_t2".into(),
        statistic: ex.fraction,
        target: ex.allowed,
        std_err: ex.std_err,
        pass: ex.fraction <= ex.allowed + 4.0 * ex.std_err,
    });

    for (k, ell, k_k, name) in [
        (2, 6, DMatrix::identity(2, 2), "wishart_inverse_k2_l6_identity"),
        (1, 5, DMatrix::from_element(1, 1, 4.0), "wishart_inverse_k1_l5_scalar4"),
    ] {
        let w = wishart_inverse_check(k, ell, &k_k, n_samples, seed(6))?;
        checks.push(OracleCheck {
            name: name.into(),
            statistic: w.max_deviation,
            target: 0.0,
            std_err: w.std_err,
            pass: w.passes,
        });
    }

    let trials = 1000;
    let holds = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let a = standard_normal_matrix(30, 30, seed(7).with_stream((7 << 32) + 2 * i));
            let z = standard_normal_matrix(30, 12, seed(7).with_stream((7 << 32) + 2 * i + 1));
            deterministic_bound_check(&a, &z, 5).map(|c| c.holds)
        })
        .collect::<Result<Vec<bool>>>()?;
    let frac = holds.iter().filter(|&&h| h).count() as f64 / trials as f64;
    checks.push(OracleCheck {
        name: "deterministic_bound_random_n30_k5_l12".into(),
        statistic: frac,
        target: 1.0,
        std_err: 0.0,
        pass: frac == 1.0,
    });

    let a = random_decaying(8, 8, 0.7, seed(8));
    let part = svd_partition(&a, 3)?;
    let cov = CovarianceOperator::from_factor(random_spd(8, 0.05, seed(9)).cholesky().expect("SPD").l(), "K");
    let ks = conditional_resampling_test(&part, &cov, 7, (n_samples / 10).max(10), seed(10))?;
    checks.push(OracleCheck {
        name: "conditional_resampling_ks_p_value".into(),
        statistic: ks.p_value,
        target: 1e-3,
        std_err: 0.0,
        pass: ks.p_value >= 1e-3,
    });

    Ok(OracleReport {
        n_samples,
        base_seed,
        checks,
    })
}
