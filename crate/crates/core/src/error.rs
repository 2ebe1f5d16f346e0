use thiserror::Error;

/// Errors raised by likelihood evaluation, calibration and the supporting
/// polynomial machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("leading MA coefficient must be exactly 1, got {0}")]
    LeadingCoefficient(f64),

    #[error("non-finite coefficient at position {0}")]
    NonFinite(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sample too short: {0}")]
    InsufficientSample(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("Cholesky factorisation of the q x q kernel matrix failed (non-finite input?)")]
    KernelFactorization,

    #[error("rank-deficient regression design (smallest singular value {0:e})")]
    RankDeficient(f64),

    #[error("optimal innovation covariance is singular (degenerate sample)")]
    SingularOmega,

    #[error("MA polynomial is not invertible: largest inverse-root modulus {0}")]
    NotInvertible(f64),

    #[error("root set is not closed under complex conjugation")]
    NotConjugateClosed,

    #[error("cannot invert a zero root")]
    ZeroRoot,

    #[error("repeated roots (separation {0:e}); the Vieta Jacobian is singular")]
    RepeatedRoots(f64),

    #[error("selection index {0} out of range")]
    SelectionIndex(usize),

    #[error("autoregressive part is not stable (companion spectral radius {0})")]
    UnstableAr(f64),

    #[error("matrix MA polynomial has singular leading coefficient (det N(0) = 0)")]
    SingularLeadingMa,

    #[error("invalid matrix VARMA: {0}")]
    InvalidMatrixModel(String),

    #[error("every optimisation start failed")]
    AllStartsFailed,

    #[error("dense oracle guardrail exceeded: {0}")]
    Guardrail(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
