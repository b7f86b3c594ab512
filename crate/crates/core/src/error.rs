use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("|xi| = {radius} lies outside the tabulated range [0, {max}]")]
    OutOfRange { radius: f64, max: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("Hartman-Wintner condition failed for this symbol")]
    HartmanWintnerFailed,

    #[error("frequency cutoff too small: exp(-t Re psi) = {tail:e} at |xi| = {cutoff} exceeds {tolerance:e}")]
    TailTolerance { cutoff: f64, tail: f64, tolerance: f64 },

    #[error("negative density {value:e} below tolerance -{tolerance:e}")]
    NegativeMass { value: f64, tolerance: f64 },

    #[error("unsupported dimension {0} (only 1 and 2 are supported here)")]
    UnsupportedDimension(usize),

    #[error("unsupported symbol family for sampling: {0}")]
    UnsupportedFamily(String),

    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("overflow evaluating the nonlinearity at y = {0}")]
    Overflow(f64),

    #[error("inf-convolution grid too coarse: m * spacing = {0:e}")]
    CoarseGrid(f64),

    #[error("fixed-point iteration did not converge in {iterations} sweeps (last distance {distance:e})")]
    NonConvergence { iterations: usize, distance: f64 },

    #[error("boundary mass {mass:e} at x = {point:?} exceeds {limit:e}")]
    BoundaryMass { mass: f64, point: Vec<f64>, limit: f64 },

    #[error("regression basis error: {0}")]
    Basis(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("too many paths left the lattice: fraction {0}")]
    LatticeCoverage(f64),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("gate failure: {0}")]
    Gate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
