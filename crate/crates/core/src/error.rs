use thiserror::Error;

/// Errors surfaced by the lattice, spectral, and statistics layers.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite spacing")]
    NonFiniteSpacing,
    #[error("degenerate spacing (infinite gap) at site {site}")]
    DegenerateSpacing { site: i64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("stiffness failure at t = {t} (step fell below {min_step})")]
    StiffnessFailure { t: f64, min_step: f64 },
    #[error("log of zero")]
    LogOfZero,
    #[error("domain mismatch")]
    DomainMismatch,
    #[error("eigensolver failed to converge on block [{lo}, {hi})")]
    NonConvergence { lo: usize, hi: usize },
    #[error("transfer matrix undefined (zero off-diagonal at {index})")]
    TransferUndefined { index: i64 },
    #[error("empty restriction")]
    EmptyRestriction,
    #[error("no zeta-bijection; max matching size = {max_matching}")]
    NoBijection { max_matching: usize },
    #[error("profile underdetermined ({points} usable points)")]
    ProfileUnderdetermined { points: usize },
    #[error("identity tracking unreliable (eigenvalue drift {drift} vs min gap {min_gap})")]
    TrackingUnreliable { drift: f64, min_gap: f64 },
    #[error("underflow-unrecoverable entry")]
    Underflow,
    #[error("fewer than 3 samples")]
    TooFewSamples,
    #[error("empty window")]
    EmptyWindow,
    #[error("zero bandwidth")]
    ZeroBandwidth,
    #[error("coincident eigenvalues (gap {gap} at index {index})")]
    CoincidentEigenvalues { gap: f64, index: usize },
    #[error("ill-conditioned system (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("mismatched sampling between trajectories")]
    MismatchedSampling,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
