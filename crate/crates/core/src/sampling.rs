//! Seeded Gaussian sampling with a prescribed covariance `K = F Fᵀ`.
//!
//! Every draw is keyed by a [`SeedSpec`]: the base seed selects a ChaCha8 key
//! and the stream id selects one of its 2^64 independent streams, so runs can
//! be generated in any order (or concurrently) with identical results.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_symmetric, symmetric_eigen_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self { base_seed, stream_id }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Symmetric PSD covariance held as a factor: `K = factor · factorᵀ`.
#[derive(Debug, Clone)]
pub struct CovarianceOperator {
    pub factor: DMatrix<f64>,
    pub label: String,
}

impl CovarianceOperator {
    /// Uses `factor` verbatim. Only `F Fᵀ` matters for the sketch law.
    pub fn from_factor(factor: DMatrix<f64>, label: impl Into<String>) -> Self {
        Self {
            factor,
            label: label.into(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_factor(DMatrix::identity(dim, dim), "I")
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Number of columns of the factor (width of the underlying Gaussian).
    pub fn inner_dim(&self) -> usize {
        self.factor.ncols()
    }

    /// Forms K explicitly.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// tr(K) = ‖F‖_F².
    pub fn trace(&self) -> f64 {
        self.factor.norm_squared()
    }

    /// K·M without forming K.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.factor * self.factor.tr_mul(m)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_factor(&self.factor * c, format!("{}*{c}", self.label))
    }
}

/// Factor a symmetric PSD matrix through its eigendecomposition,
/// clipping small negative eigenvalues to zero.
pub fn covariance_from_matrix(k_mat: &DMatrix<f64>) -> Result<CovarianceOperator> {
    ensure_symmetric(k_mat, 1e-8, "covariance")?;
    let (vals, vecs) = symmetric_eigen_sorted(k_mat);
    let n = vals.len();
    let lmax = vals.iter().copied().fold(0.0f64, f64::max);
    let lmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if n > 0 && lmin < -1e-6 * lmax.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
            max_eigenvalue: lmax,
        });
    }
    let roots = DVector::from_iterator(n, vals.iter().map(|&l| l.max(0.0).sqrt()));
    let mut factor = vecs;
    for (j, r) in roots.iter().enumerate() {
        factor.column_mut(j).scale_mut(*r);
    }
    Ok(CovarianceOperator::from_factor(factor, "K"))
}

/// r×ℓ matrix of i.i.d. standard normals, filled column by column.
pub fn standard_normal_matrix(rows: usize, cols: usize, seed: SeedSpec) -> DMatrix<f64> {
    let mut rng = seed.rng();
    let mut out = DMatrix::zeros(rows, cols);
    for x in out.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
    out
}

/// Z = F·Ω with Ω standard Gaussian: columns of Z are i.i.d. N(0, K).
pub fn sample_sketch(cov: &CovarianceOperator, ell: usize, seed: SeedSpec) -> Result<DMatrix<f64>> {
    if ell == 0 {
        return Err(Error::Parameter("sketch width ell must be >= 1".into()));
    }
    let omega = standard_normal_matrix(cov.inner_dim(), ell, seed);
    Ok(&cov.factor * omega)
}

/// Random matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn random_orthonormal(rows: usize, cols: usize, seed: SeedSpec) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in R^{rows}");
    standard_normal_matrix(rows, cols, seed).qr().q()
}

/// m×n matrix `U diag(sigma) Vᵀ` with random orthonormal factors.
pub fn matrix_with_spectrum(rows: usize, cols: usize, sigma: &[f64], seed: SeedSpec) -> DMatrix<f64> {
    let r = sigma.len();
    assert!(r <= rows.min(cols), "spectrum longer than min(m, n)");
    let u = random_orthonormal(rows, r, seed);
    let v = random_orthonormal(cols, r, seed.with_stream(seed.stream_id ^ 0x5eed_0000_0000_0001));
    let s = DMatrix::from_diagonal(&DVector::from_column_slice(sigma));
    u * s * v.transpose()
}
