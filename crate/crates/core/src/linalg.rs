//! Dense linear-algebra primitives: SVD partitioning, orthogonal projectors,
//! principal angles and tangent matrices, PSD ordering.
//!
//! Matrices are `nalgebra::DMatrix<f64>` throughout. All functions are pure.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which singular values are treated as zero:
/// `max(rows, cols) * sigma_max * 2^-40`.
pub fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * 2f64.powi(-40)
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Largest absolute entry of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Errors unless `m` is square and symmetric within `tol` (relative to its
/// largest entry, floored at 1).
pub fn ensure_symmetric(m: &DMatrix<f64>, tol: f64, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Parameter(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = asymmetry(m);
    if asym > tol * scale {
        return Err(Error::Parameter(format!(
            "{what} is not symmetric (max |m_ij - m_ji| = {asym:e})"
        )));
    }
    Ok(())
}

/// Symmetric eigendecomposition with eigenvalues sorted nonincreasing and
/// eigenvectors permuted to match. The input is symmetrized first.
pub fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Thin SVD with singular values sorted nonincreasing: `(U, sigma, V)` with
/// `U` of size m×r, `V` of size n×r, r = min(m, n).
pub fn thin_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let sigma = DVector::from_iterator(r, order.iter().map(|&i| svd.singular_values[i]));
    let u_sorted = DMatrix::from_fn(a.nrows(), r, |i, c| u[(i, order[c])]);
    let v_sorted = DMatrix::from_fn(a.ncols(), r, |i, c| v_t[(order[c], i)]);
    (u_sorted, sigma, v_sorted)
}

/// Orthonormal basis of the orthogonal complement of `range(q)`, where `q`
/// (m×r) has orthonormal columns. Returns an m×(m−r) matrix.
pub fn orthonormal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, r) = q.shape();
    if r >= m {
        return DMatrix::zeros(m, 0);
    }
    // Householder QR of [q | I]: the first r columns of the m×m factor span
    // range(q), the remaining ones its complement.
    let mut aug = DMatrix::zeros(m, r + m);
    aug.view_mut((0, 0), (m, r)).copy_from(q);
    aug.view_mut((0, r), (m, m)).fill_with_identity();
    let full_q = aug.qr().q();
    full_q.columns(r, m - r).into_owned()
}

/// Numerical rank at the crate-wide pseudoinverse cutoff.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let cut = rank_cutoff(a.nrows(), a.ncols(), smax);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Moore–Penrose pseudoinverse with the crate-wide cutoff.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, s, v) = thin_svd(a);
    if s.is_empty() || s[0] == 0.0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let cut = rank_cutoff(a.nrows(), a.ncols(), s[0]);
    let inv = DVector::from_iterator(s.len(), s.iter().map(|&x| if x > cut { 1.0 / x } else { 0.0 }));
    &v * DMatrix::from_diagonal(&inv) * u.transpose()
}

/// Orthonormal basis of `range(z)` for full column rank `z`.
pub fn orthonormal_basis(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (u, s, _) = thin_svd(z);
    let needed = z.ncols();
    let rank = if s.is_empty() || s[0] == 0.0 {
        0
    } else {
        let cut = rank_cutoff(z.nrows(), z.ncols(), s[0]);
        s.iter().filter(|&&x| x > cut).count()
    };
    if rank < needed {
        return Err(Error::Degenerate {
            context: "sketch basis".into(),
            rank,
            required: needed,
        });
    }
    Ok(u.columns(0, needed).into_owned())
}

/// Full SVD `A = U Σ Vᵀ` with square orthogonal `U` (m×m) and `V` (n×n) and
/// singular values sorted nonincreasing. Partitions at any rank are cheap.
#[derive(Debug, Clone)]
pub struct FullSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl FullSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let (u_thin, sigma, v_thin) = thin_svd(a);
        let u = complete_basis(u_thin, m);
        let v = complete_basis(v_thin, n);
        Self { u, sigma, v }
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// Numerical rank at the pseudoinverse cutoff.
    pub fn rank(&self) -> usize {
        if self.sigma.is_empty() || self.sigma[0] == 0.0 {
            return 0;
        }
        let cut = rank_cutoff(self.rows(), self.cols(), self.sigma[0]);
        self.sigma.iter().filter(|&&s| s > cut).count()
    }

    /// Euclidean norm of the singular values beyond index `k`.
    pub fn tail_norm(&self, k: usize) -> f64 {
        self.sigma.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn partition(&self, k: usize) -> Result<SvdPartition> {
        let (m, n) = (self.rows(), self.cols());
        let r = self.sigma.len();
        if k == 0 || k > r {
            return Err(Error::Parameter(format!(
                "target rank k = {k} must satisfy 1 <= k <= min(m, n) = {r}"
            )));
        }
        Ok(SvdPartition {
            u_k: self.u.columns(0, k).into_owned(),
            u_bar_k: self.u.columns(k, m - k).into_owned(),
            sigma_k: self.sigma.rows(0, k).into_owned(),
            sigma_bar_k: self.sigma.rows(k, r - k).into_owned(),
            v_k: self.v.columns(0, k).into_owned(),
            v_bar_k: self.v.columns(k, n - k).into_owned(),
            k,
        })
    }
}

fn complete_basis(thin: DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    if thin.ncols() == dim {
        return thin;
    }
    let comp = orthonormal_complement(&thin);
    let mut full = DMatrix::zeros(dim, dim);
    full.view_mut((0, 0), thin.shape()).copy_from(&thin);
    full.view_mut((0, thin.ncols()), comp.shape()).copy_from(&comp);
    full
}

/// Rank-k split `A = [U_k Ū_k] diag(Σ_k, Σ̄_k) [V_k V̄_k]ᵀ`.
///
/// When σ_k = σ_{k+1} the split is not unique; every downstream quantity is
/// relative to the partition the SVD happened to return.
#[derive(Debug, Clone)]
pub struct SvdPartition {
    pub u_k: DMatrix<f64>,
    pub u_bar_k: DMatrix<f64>,
    pub sigma_k: DVector<f64>,
    /// The min(m, n) − k trailing singular values.
    pub sigma_bar_k: DVector<f64>,
    pub v_k: DMatrix<f64>,
    pub v_bar_k: DMatrix<f64>,
    pub k: usize,
}

impl SvdPartition {
    pub fn rows(&self) -> usize {
        self.u_k.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v_k.nrows()
    }

    /// ‖Σ̄_k‖_F, the Eckart–Young optimal rank-k error.
    pub fn optimal_error(&self) -> f64 {
        self.sigma_bar_k.norm()
    }

    /// σ_{k+1}, or 0 when k = min(m, n).
    pub fn sigma_next(&self) -> f64 {
        self.sigma_bar_k.get(0).copied().unwrap_or(0.0)
    }

    pub fn sigma_k_min(&self) -> f64 {
        self.sigma_k[self.k - 1]
    }

    /// Σ̄_k as its (m−k)×(n−k) rectangular diagonal matrix.
    pub fn sigma_bar_rect(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.rows() - self.k, self.cols() - self.k);
        for (i, &v) in self.sigma_bar_k.iter().enumerate() {
            s[(i, i)] = v;
        }
        s
    }

    /// Full left singular basis [U_k Ū_k].
    pub fn u_full(&self) -> DMatrix<f64> {
        let m = self.rows();
        let mut u = DMatrix::zeros(m, m);
        u.view_mut((0, 0), self.u_k.shape()).copy_from(&self.u_k);
        u.view_mut((0, self.k), self.u_bar_k.shape()).copy_from(&self.u_bar_k);
        u
    }

    /// U_k Σ_k V_kᵀ + Ū_k Σ̄_k V̄_kᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let head = &self.u_k * DMatrix::from_diagonal(&self.sigma_k) * self.v_k.transpose();
        let tail = &self.u_bar_k * self.sigma_bar_rect() * self.v_bar_k.transpose();
        head + tail
    }
}

/// Rank-k SVD partition of `a`.
pub fn svd_partition(a: &DMatrix<f64>, k: usize) -> Result<SvdPartition> {
    let r = a.nrows().min(a.ncols());
    if k == 0 || k > r {
        return Err(Error::Parameter(format!(
            "target rank k = {k} must satisfy 1 <= k <= min(m, n) = {r}"
        )));
    }
    FullSvd::new(a).partition(k)
}

/// ‖(I − π(Z)) A‖_F evaluated as ‖A − Q(QᵀA)‖_F with Q an orthonormal basis
/// of range(Z).
pub fn projector_residual_norm(a: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != z.nrows() {
        return Err(Error::Parameter(format!(
            "row mismatch: A has {} rows, Z has {}",
            a.nrows(),
            z.nrows()
        )));
    }
    let q = orthonormal_basis(z)?;
    Ok(residual_with_basis(a, &q))
}

/// ‖A − Q(QᵀA)‖_F for Q with orthonormal columns.
pub fn residual_with_basis(a: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let coeffs = q.tr_mul(a);
    (a - q * coeffs).norm()
}

fn ensure_orthonormal(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let k = m.ncols();
    let err = (m.tr_mul(m) - DMatrix::<f64>::identity(k, k)).norm();
    if err > 1e-8 {
        return Err(Error::Parameter(format!(
            "{what} must have orthonormal columns (‖MᵀM − I‖_F = {err:e})"
        )));
    }
    Ok(())
}

/// Tangent matrix M̄ᵀN(MᵀN)⁺. Its singular values are tan θ_i for the
/// principal angles between range(M) and range(N).
pub fn tangent_matrix(m_basis: &DMatrix<f64>, n_mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m_basis.shape() != n_mat.shape() {
        return Err(Error::Parameter(format!(
            "shape mismatch: M is {:?}, N is {:?}",
            m_basis.shape(),
            n_mat.shape()
        )));
    }
    ensure_orthonormal(m_basis, "M")?;
    let m_bar = orthonormal_complement(m_basis);
    tangent_matrix_with_complement(m_basis, &m_bar, n_mat)
}

/// Tangent matrix with a caller-supplied orthonormal complement M̄.
pub fn tangent_matrix_with_complement(
    m_basis: &DMatrix<f64>,
    m_bar: &DMatrix<f64>,
    n_mat: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let k = m_basis.ncols();
    let cross = m_basis.tr_mul(n_mat);
    let n_scale = n_mat.norm();
    let (u, s, v) = thin_svd(&cross);
    let cut = rank_cutoff(n_mat.nrows(), k, n_scale);
    let rank = s.iter().filter(|&&x| x > cut).count();
    if rank < k {
        return Err(Error::Degenerate {
            context: "MᵀN in tangent matrix (principal angle at π/2)".into(),
            rank,
            required: k,
        });
    }
    let inv = DMatrix::from_diagonal(&s.map(|x| 1.0 / x));
    let cross_inv = &v * inv * u.transpose();
    Ok(m_bar.tr_mul(n_mat) * cross_inv)
}

/// Principal angles θ_i = arccos σ_i(MᵀN), in the order of the singular
/// values (largest cosine first), with cosines clamped to [0, 1].
pub fn principal_angles(m_basis: &DMatrix<f64>, n_basis: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m_basis.shape() != n_basis.shape() {
        return Err(Error::Parameter(format!(
            "shape mismatch: M is {:?}, N is {:?}",
            m_basis.shape(),
            n_basis.shape()
        )));
    }
    let (_, s, _) = thin_svd(&m_basis.tr_mul(n_basis));
    Ok(s.iter().map(|&c| c.clamp(-1.0, 1.0).acos()).collect())
}

/// `m1 ⪯ m2` in the Loewner order: λ_min(m2 − m1) ≥ −tol.
pub fn psd_leq(m1: &DMatrix<f64>, m2: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if m1.shape() != m2.shape() {
        return Err(Error::Parameter("psd_leq operands differ in shape".into()));
    }
    ensure_symmetric(m1, tol, "left operand")?;
    ensure_symmetric(m2, tol, "right operand")?;
    let diff = m2 - m1;
    let (vals, _) = symmetric_eigen_sorted(&diff);
    let lmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lmin >= -tol)
}

/// Read-only accessor used by several modules: diag(v) as a matrix.
pub(crate) fn diag(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}
