use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum HpsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("operator is not elliptic at node {node} ({x:?}): c11 = {c11}, c11*c22 - c12^2 = {det}")]
    EllipticityViolation {
        node: usize,
        x: [f64; 2],
        c11: f64,
        det: f64,
    },

    #[error("coefficient `{field}` is not finite at node {node} ({x:?})")]
    NonFiniteCoefficient {
        field: &'static str,
        node: usize,
        x: [f64; 2],
    },

    #[error("leaf {node} is (near-)resonant: rcond(A_ii) = {rcond:e} below threshold {threshold:e}")]
    ResonantLeaf {
        node: usize,
        rcond: f64,
        threshold: f64,
    },

    #[error("merge at node {node} is (near-)resonant: rcond = {rcond:e} below threshold {threshold:e}")]
    ResonantMerge {
        node: usize,
        rcond: f64,
        threshold: f64,
    },

    #[error("layout cannot be bisected into connected halves: {0}")]
    UndecomposableLayout(String),

    #[error("children of node {node} are inconsistent: {reason}")]
    InconsistentChildren { node: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dense system is singular (rcond = {rcond:e})")]
    SingularSystem { rcond: f64 },

    #[error("probe point {point:?} is not a mesh node (nearest at distance {distance:e})")]
    ProbeNotOnMesh { point: [f64; 2], distance: f64 },

    #[error("scaling study needs at least {needed} sizes spanning {span}x in N, got {got}")]
    InsufficientPoints {
        needed: usize,
        span: f64,
        got: usize,
    },

    #[error("operator file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HpsError>;
