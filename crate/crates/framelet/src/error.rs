//! One error type for the whole crate.

use thiserror::Error;

/// Everything the library can fail with.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or signal dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An edge references a node outside `0..num_nodes`.
    #[error("edge ({i}, {j}) out of range for {num_nodes} nodes")]
    EdgeOutOfRange { i: usize, j: usize, num_nodes: usize },

    /// Configuration value outside its documented domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A matrix handed to the eigensolver is not symmetric within tolerance.
    #[error("matrix is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {delta}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },

    /// Iterative routine ran out of its iteration budget.
    #[error("{what} did not converge within {budget} iterations")]
    NoConvergence { what: &'static str, budget: usize },

    /// Spectrum extends past the Chebyshev filter's fitted domain.
    #[error(
        "spectral radius estimate {lambda_max} exceeds filter domain [0, {domain_upper}]; \
         refit with a larger domain_upper"
    )]
    DomainExceeded { lambda_max: f64, domain_upper: f64 },

    /// Exact (dense eigendecomposition) mode refused for this size.
    #[error("exact mode supports up to {limit} nodes, got {n}; use chebyshev mode")]
    DenseLimit { n: usize, limit: usize },

    /// Graph data violates a structural precondition (labels, splits, finiteness).
    #[error("graph data: {0}")]
    GraphData(String),

    /// Gradient or weight became non-finite during optimization.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// CSV writing failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
