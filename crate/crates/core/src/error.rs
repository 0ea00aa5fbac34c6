//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular basis: |det| = {det:.3e} is below tolerance {tol:.3e}")]
    SingularBasis { det: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {dim} exceeds the exact-enumeration limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("coarse lattice is not nested in the fine lattice")]
    NotNested,

    #[error("quotient index {index} exceeds limit {limit}")]
    IndexTooLarge { index: u128, limit: u64 },

    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("vector is not a lattice point")]
    NotLatticePoint,

    #[error("method unsupported: {0}")]
    MethodUnsupported(String),

    #[error("bisection target not bracketed on [{lo:.3e}, {hi:.3e}]")]
    NonBracketed { lo: f64, hi: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),

    #[error("generator matrix is rank deficient")]
    RankDeficientCode,

    #[error("chain construction failed after {0} attempts")]
    ConstructionFailed(usize),

    #[error("source is not degradable: |rho_xz| must be smaller than |rho_xy|")]
    NotDegradable,

    #[error("correlation matrix is not positive semidefinite (det = {0:.3e})")]
    NotPsd(f64),

    #[error("public message is not a valid coset representative")]
    InvalidPublicMessage,

    #[error("enumeration too large: {count} exceeds limit {limit}")]
    EnumerationTooLarge { count: u128, limit: u64 },

    #[error("key space too large for histogramming: {size}")]
    KeySpaceTooLarge { size: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
