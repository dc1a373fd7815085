//! Data-assimilation test matrices `A = I + L Hᵀ R⁻¹ H L` and the sketch
//! covariances studied on them.
//!
//! The prior B is a stand-in for a diffusion-operator covariance: the squared
//! inverse of `I + γ·Δ_h` (Δ_h the 1-D Neumann Laplacian), rescaled to unit
//! variance. H selects m evenly spaced grid points and R = σ_R² I.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grsvd::LowRankFactors;
use crate::linalg::{diag, ensure_symmetric, symmetric_eigen_sorted, thin_svd};
use crate::sampling::CovarianceOperator;

pub const DEFAULT_SIGMA_R: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 400.0;

fn default_sigma_r() -> f64 {
    DEFAULT_SIGMA_R
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaScenario {
    pub name: String,
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_sigma_r")]
    pub sigma_r: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

impl DaScenario {
    pub fn new(name: impl Into<String>, n: usize, m: usize) -> Self {
        Self {
            name: name.into(),
            n,
            m,
            sigma_r: DEFAULT_SIGMA_R,
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn low_obs() -> Self {
        Self::new("LowObs", 1000, 200)
    }

    pub fn high_obs() -> Self {
        Self::new("HighObs", 1000, 500)
    }

    /// Looks up "LowObs" / "HighObs" (case-insensitive).
    pub fn named(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "lowobs" => Some(Self::low_obs()),
            "highobs" => Some(Self::high_obs()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Parameter(format!("state dimension n = {} must be >= 2", self.n)));
        }
        if self.m > self.n {
            return Err(Error::Parameter(format!(
                "m = {} observations exceed n = {}",
                self.m, self.n
            )));
        }
        if !(self.sigma_r > 0.0) || !self.sigma_r.is_finite() {
            return Err(Error::Parameter(format!("sigma_r must be positive, got {}", self.sigma_r)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Parameter(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DaMatrices {
    pub scenario: DaScenario,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Symmetric square root of B.
    pub l: DMatrix<f64>,
    pub h_indices: Vec<usize>,
    /// W = L Hᵀ R⁻¹ H L, so that A = I + W.
    pub w: DMatrix<f64>,
}

impl DaMatrices {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `(S_m, Λ_m)` from the thin SVD `L Hᵀ R^{-1/2} = S_m Λ_m^{1/2} F_mᵀ`;
    /// then `W = S_m Λ_m S_mᵀ`.
    pub fn observation_modes(&self) -> (DMatrix<f64>, DVector<f64>) {
        let lht = self.observed_rows().transpose() / self.scenario.sigma_r;
        let (s, sv, _) = thin_svd(&lht);
        (s, sv.map(|x| x * x))
    }

    /// H L: the m selected rows of L.
    pub fn observed_rows(&self) -> DMatrix<f64> {
        self.l.select_rows(self.h_indices.iter())
    }
}

/// Eigenpairs of the n-point Neumann Laplacian (diagonal 2, ends 1,
/// off-diagonals −1): eigenvalues 2 − 2cos(πj/n), DCT-II eigenvectors.
fn neumann_laplacian_eigen(n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let nf = n as f64;
    let vals = DVector::from_fn(n, |j, _| 2.0 - 2.0 * (PI * j as f64 / nf).cos());
    let vecs = DMatrix::from_fn(n, n, |i, j| {
        let scale = if j == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (PI * j as f64 * (i as f64 + 0.5) / nf).cos()
    });
    (vals, vecs)
}

/// Prior covariance B with unit diagonal and its symmetric square root L.
pub fn build_prior_covariance(n: usize, gamma: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n < 2 {
        return Err(Error::Parameter(format!("n = {n} must be >= 2")));
    }
    let (mu, v) = neumann_laplacian_eigen(n);
    let filt = mu.map(|x| (1.0 + gamma * x).powi(-2));
    let b0 = &v * diag(&filt) * v.transpose();
    let d = b0.diagonal().map(|x| 1.0 / x.sqrt());
    let mut b = DMatrix::from_fn(n, n, |i, j| d[i] * b0[(i, j)] * d[j]);
    b = (&b + b.transpose()) * 0.5;
    let (vals, vecs) = symmetric_eigen_sorted(&b);
    let roots = vals.map(|x| x.max(0.0).sqrt());
    let l = &vecs * diag(&roots) * vecs.transpose();
    Ok((b, (&l + l.transpose()) * 0.5))
}

/// Evenly spaced observation indices `floor(j·n/m)`, j = 0..m−1.
pub fn build_selection_operator(n: usize, m: usize) -> Result<Vec<usize>> {
    if m > n {
        return Err(Error::Parameter(format!("m = {m} exceeds n = {n}")));
    }
    Ok((0..m).map(|j| j * n / m).collect())
}

pub fn assemble_da_matrix(scenario: &DaScenario) -> Result<DaMatrices> {
    scenario.validate()?;
    let n = scenario.n;
    let (b, l) = build_prior_covariance(n, scenario.gamma)?;
    let h_indices = build_selection_operator(n, scenario.m)?;
    let hl = l.select_rows(h_indices.iter());
    let mut w = hl.tr_mul(&hl) / (scenario.sigma_r * scenario.sigma_r);
    w = (&w + w.transpose()) * 0.5;
    let a = DMatrix::identity(n, n) + &w;
    Ok(DaMatrices {
        scenario: scenario.clone(),
        a,
        b,
        l,
        h_indices,
        w,
    })
}

/// All eigenvalues of a symmetric matrix, nonincreasing.
pub fn spectrum(mat: &DMatrix<f64>) -> Result<Vec<f64>> {
    ensure_symmetric(mat, 1e-8, "matrix")?;
    Ok(symmetric_eigen_sorted(mat).0.iter().copied().collect())
}

/// The matrix C in K = A C A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case")]
pub enum CovarianceCase {
    /// C = I (K = A², one exact power step)
    #[serde(rename = "I")]
    Identity,
    /// C = A² (K = A⁴)
    #[serde(rename = "A2")]
    ASquared,
    /// C = B (K = A B A)
    #[serde(rename = "B")]
    Prior,
    /// C = B² (K = A B² A)
    #[serde(rename = "B2")]
    PriorSquared,
    /// C = α V̂_kΣ̂_k²V̂_kᵀ + β(I − V̂_kV̂_kᵀ)
    #[serde(rename = "alpha_beta")]
    AlphaBeta { alpha: f64, beta: f64 },
    /// C = L C_{1,1} L
    #[serde(rename = "L")]
    PriorWeighted,
}

impl CovarianceCase {
    pub fn label(&self) -> String {
        match self {
            Self::Identity => "C=I".into(),
            Self::ASquared => "C=A^2".into(),
            Self::Prior => "C=B".into(),
            Self::PriorSquared => "C=B^2".into(),
            Self::AlphaBeta { alpha, beta } => format!("C_{{{alpha},{beta}}}"),
            Self::PriorWeighted => "C_L".into(),
        }
    }

    /// Whether the case is built from an available rank-k approximation.
    pub fn needs_approximation(&self) -> bool {
        matches!(self, Self::AlphaBeta { .. } | Self::PriorWeighted)
    }
}

/// Factor of C_{α,β}: `[√α V̂Σ̂ | √β (I − V̂V̂ᵀ)]`.
pub fn alpha_beta_factor(approx: &LowRankFactors, alpha: f64, beta: f64) -> DMatrix<f64> {
    let v = &approx.v_hat_k;
    let (n, k) = v.shape();
    let head = v * diag(&approx.sigma_hat_k) * alpha.sqrt();
    let mut f = DMatrix::zeros(n, k + if beta > 0.0 { n } else { 0 });
    f.view_mut((0, 0), (n, k)).copy_from(&head);
    if beta > 0.0 {
        let comp = (DMatrix::identity(n, n) - v * v.transpose()) * beta.sqrt();
        f.view_mut((0, k), (n, n)).copy_from(&comp);
    }
    f
}

/// Factor of C itself (K = A C A is then `A · factor`).
pub fn c_factor(
    case: CovarianceCase,
    da: &DaMatrices,
    approx: Option<&LowRankFactors>,
) -> Result<DMatrix<f64>> {
    let need = |what: &str| {
        approx.ok_or_else(|| Error::Parameter(format!("{what} needs an available rank-k approximation")))
    };
    Ok(match case {
        CovarianceCase::Identity => DMatrix::identity(da.n(), da.n()),
        CovarianceCase::ASquared => da.a.clone(),
        CovarianceCase::Prior => da.l.clone(),
        CovarianceCase::PriorSquared => da.b.clone(),
        CovarianceCase::AlphaBeta { alpha, beta } => {
            let approx = need("C_{alpha,beta}")?;
            if !(alpha > 0.0) || beta < 0.0 {
                return Err(Error::Parameter(format!(
                    "need alpha > 0 and beta >= 0, got alpha = {alpha}, beta = {beta}"
                )));
            }
            let smin = approx.sigma_hat_k.min();
            if beta > alpha * smin * smin {
                warn!(
                    "beta = {beta} exceeds alpha * sigma_hat_k^2 = {}; range(V_hat_k) is no longer the dominant eigenspace of C",
                    alpha * smin * smin
                );
            }
            alpha_beta_factor(approx, alpha, beta)
        }
        CovarianceCase::PriorWeighted => {
            let approx = need("C_L")?;
            &da.l * alpha_beta_factor(approx, 1.0, 1.0)
        }
    })
}

/// Sketch covariance K = A C A held as the factor `A · factor(C)`.
pub fn covariance_case(
    case: CovarianceCase,
    da: &DaMatrices,
    approx: Option<&LowRankFactors>,
) -> Result<CovarianceOperator> {
    let f = c_factor(case, da, approx)?;
    Ok(CovarianceOperator::from_factor(&da.a * f, case.label()))
}
