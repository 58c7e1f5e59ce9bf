use thiserror::Error;

/// Errors produced by the numerical kernels, controllers and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("wrench outside the parametrization domain: {0}")]
    OutOfDomain(String),

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    /// The equality-constrained problem has a rank-deficient constraint matrix.
    #[error("degenerate constraint set (rank {rank} < {required}), residual {residual:e}")]
    Degenerate {
        rank: usize,
        required: usize,
        residual: f64,
    },

    /// `A·Φ(ξ)` lost row rank; `xi_dot` is the best-effort minimum-norm input.
    #[error("momentum authority degraded (rank {rank} < 6), residual {residual:e}")]
    DegradedAuthority {
        rank: usize,
        residual: f64,
        xi_dot: Vec<f64>,
    },

    /// `Λ = J M⁻¹ B` is not of full rank.
    #[error("actuation deficiency: rank(Λ) = {rank}, expected {expected}")]
    ActuationDeficiency { rank: usize, expected: usize },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;
