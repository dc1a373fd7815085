//! Generalized randomized SVD with arbitrary Gaussian sketch covariance.
//!
//! The crate draws sketches `Z` whose columns are `N(0, K)` for any PSD `K`,
//! runs the two-stage randomized SVD on them, evaluates the expectation and
//! probability bounds on `‖(I − π(Z))A‖_F` driven by the coefficients
//! τ_k(K) and ρ_k(K), and reproduces a set of data-assimilation experiments
//! (3D-Var Gauss–Newton matrices with diffusion priors) with Monte Carlo
//! oracles for the stochastic identities behind the bounds.
//!
//! Modules:
//! - [`linalg`]: SVD partitions, projectors, principal angles, tangent matrices
//! - [`sampling`]: seeded `N(0, K)` sketches from a covariance factor
//! - [`grsvd`]: the randomized SVD and empirical error statistics
//! - [`bounds`]: τ_k, ρ_k and every bound built on them
//! - [`daproblem`]: data-assimilation matrices and covariance cases
//! - [`experiments`]: config-driven sweeps and CSV/JSON output
//! - [`oracle`]: brute-force Monte Carlo checks of the stochastic machinery
//! - [`matrix_io`]: the plain-text matrix exchange format

pub mod bounds;
pub mod daproblem;
pub mod error;
pub mod experiments;
pub mod grsvd;
pub mod linalg;
pub mod matrix_io;
pub mod oracle;
pub mod sampling;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
