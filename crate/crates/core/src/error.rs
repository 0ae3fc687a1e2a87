use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid boundary condition: {0}")]
    InvalidBoundary(String),

    #[error("rank-deficient subspace basis: rank {rank} of {expected} vectors")]
    RankDeficient { rank: usize, expected: usize },

    #[error("path violates the boundary condition: {0}")]
    Inadmissible(String),

    #[error("invalid Lagrangian: {0}")]
    InvalidLagrangian(String),

    #[error("non-finite Lagrangian value in cell {cell}")]
    NonFinite { cell: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fiber Hessian not positive definite in cell {cell}")]
    NotPositive { cell: usize },

    #[error("Legendre inversion stalled after {iterations} iterations, residual {residual:e}")]
    LegendreStalled { iterations: usize, residual: f64 },

    #[error("Gram matrix is not positive definite")]
    IndefiniteGram,

    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonMaxIterations { iterations: usize, residual: f64 },

    #[error("Newton diverged: displacement {norm:e} exceeds box bound {bound:e}")]
    NewtonDivergence { norm: f64, bound: f64 },

    #[error("critical point {id} is degenerate (nullity {nullity}); condition (L0) fails")]
    Degenerate { id: usize, nullity: usize },

    #[error("radius calibration at critical point {id} underflowed (r = {radius:e})")]
    RadiusUnderflow { id: usize, radius: f64 },

    #[error("neighbourhoods of critical points {a} and {b} overlap after shrinking")]
    Overlap { a: usize, b: usize },

    #[error("flow step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("action increased by {increase:e} in one flow step at t = {t}")]
    ActionIncrease { t: f64, increase: f64 },

    #[error("connection count failed: {0}")]
    Connection(String),

    #[error("boundary composition d_{k} o d_{} is nonzero", k + 1)]
    BoundarySquare { k: usize },

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
