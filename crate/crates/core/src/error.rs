use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 4 nodes per direction, got nx={nx}, ny={ny}")]
    InvalidGrid { nx: usize, ny: usize },

    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("shift q={q} is not a nonzero multiple of hy={hy} inside the grid")]
    InvalidShift { q: f64, hy: f64 },

    #[error("invalid norm order ({m}, {l}): {reason}")]
    InvalidOrder { m: i32, l: i32, reason: &'static str },

    #[error("dense factorization failed: {0}")]
    Factorization(String),

    #[error("alpha = 0 makes the phi equation degenerate (only A = K_x is supported)")]
    DegenerateAlpha,

    #[error("coefficient b must not vanish or change sign (min {min}, max {max})")]
    BadTransportDirection { min: f64, max: f64 },

    #[error("multiplier coefficient `{0}` must depend on y only")]
    XDependentCoefficient(&'static str),

    #[error("auxiliary iteration is not contracting (ratio {ratio:.3e} after {iterations} steps); increase lambda")]
    NonContraction { ratio: f64, iterations: usize },

    #[error("WELLPOSEDNESS_SUSPECT: sparse factorization failed ({0})")]
    WellposednessSuspect(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("boundary-incompatible manufactured solution: max violation {0:.3e}")]
    IncompatibleBoundary(f64),

    #[error("degenerate metric at node ({i}, {j})")]
    DegenerateMetric { i: usize, j: usize },

    #[error("nonlinear iteration failed after {iterations} steps: {reason}")]
    Nonlinear { iterations: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
