//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type for construction, tracking, integration and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |H - H^dag| = {defect:e} at ({row}, {col})")]
    NotHermitian { defect: f64, row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid matrix file: {0}")]
    MatrixFormat(String),

    #[error("gap collapse: |gap| = {gap:e} between levels {upper} and {lower} at s = {s}")]
    GapCollapse { s: f64, upper: usize, lower: usize, gap: f64 },

    #[error("quadrature failed to reach {target:e} after {refinements} refinements (last change {last_change:e})")]
    QuadratureError { target: f64, refinements: usize, last_change: f64 },

    #[error("interpolation system is singular or ill-conditioned (cond = {cond:e}); try a larger delta")]
    InterpolationError { cond: f64 },

    #[error("invalid schedule path: {0}")]
    InvalidPath(String),

    #[error("integrator did not converge to {tolerance:e} after {doublings} step doublings (last diff {last_diff:e})")]
    IntegratorError { tolerance: f64, doublings: usize, last_diff: f64 },

    #[error("combination has vanishing norm ({norm:e}): complete destructive interference")]
    DegenerateCombination { norm: f64 },

    #[error("boundary derivatives are not flat: |f^({order})({s})| = {value:e} exceeds {limit:e}")]
    BoundaryNotFlat { order: usize, s: f64, value: f64, limit: f64 },

    #[error("spectrum is not mirror-symmetric: max defect {defect:e} exceeds {limit:e}")]
    SpectrumNotSymmetric { defect: f64, limit: f64 },

    #[error("boundary rates differ: |f'(0) - f'(1)| = {defect:e}; the time-reversed pair construction needs equal endpoint slopes")]
    AsymmetricBoundaryRates { defect: f64 },

    #[error("gap-integral system is singular: |det| = {det:e}")]
    SingularSystem { det: f64 },

    #[error("no positive evolution times for phase integers up to {scanned}")]
    NoPositiveTimes { scanned: u32 },

    #[error("phase matching impossible: {0}")]
    PhaseMatchingImpossible(String),

    #[error("branches are duplicates: |T_C - T_A| = {diff:e}; the four-branch scheme collapsed to two")]
    DuplicateBranches { diff: f64 },

    #[error("smoothness estimate blew up: |d^{order} H/ds^{order}| = {value:e} at s = {s}")]
    SmoothnessError { order: usize, s: f64, value: f64 },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("success probability must be positive, got {0}")]
    NonPositiveSuccess(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
