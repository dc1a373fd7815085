use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its admissible range or has the wrong shape.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A matrix that must have full rank was found numerically rank deficient.
    #[error("{context}: numerical rank {rank} < required {required}")]
    Degenerate {
        context: String,
        rank: usize,
        required: usize,
    },

    /// A matrix expected to be positive semi-definite has a clearly negative eigenvalue.
    #[error("matrix is not positive semi-definite (eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    /// A hypothesis required by a bound does not hold for this instance.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// No admissible (u, t) pair exists on the search grid.
    #[error("failure budget {delta:e} is infeasible on the (u, t) grid for l - k = {oversampling}")]
    Infeasible { delta: f64, oversampling: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
