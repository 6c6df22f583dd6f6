use thiserror::Error;

/// Failures raised by the library. Solver non-convergence is not an error:
/// it is reported through `converged = false` on the returned record.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid {n_r}x{n_theta}: need N_r >= 8, N_theta >= 8 and N_theta even")]
    InvalidGrid { n_r: usize, n_theta: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("cyclic group of order {k} is invalid (need k >= 2)")]
    InvalidGroupOrder { k: usize },

    #[error("angular resolution {n_theta} is not divisible by group order {k}")]
    ResolutionNotDivisible { n_theta: usize, k: usize },

    #[error("curvature data is not invariant under the requested symmetry: {0}")]
    SymmetryViolation(String),

    #[error("curvature K must be negative on the boundary (K = {value} at theta = {theta})")]
    DegenerateCurvature { theta: f64, value: f64 },

    #[error("curvature K must be non-positive (K = {value} at r = {r}, theta = {theta})")]
    PositiveCurvature { r: f64, theta: f64, value: f64 },

    #[error("scaling factor must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("perturbation parameter must be non-negative, got {0}")]
    NegativeEps(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bubble pole meets the closed disk (min mu*d = {min_scaled_distance})")]
    PoleInsideClosure { min_scaled_distance: f64 },

    #[error("bubble concentration requires mu > 1, got {0}")]
    MuNotAboveOne(f64),

    #[error("exact hyperbolic family requires h0 > 1, got {0}")]
    DeficitNotAboveOne(f64),

    #[error("boundary layer of width {layer_width:.3e} is under-resolved; need N >= {required_n}")]
    InsufficientResolution { layer_width: f64, required_n: usize },

    #[error("map image leaves the disk (max |g| = {0})")]
    ImageLeavesDisk(f64),

    #[error("argument {value} outside the open interval ({lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    #[error("mountain-pass path collapsed: maximum reached an endpoint ({0})")]
    PathCollapse(String),

    #[error("eigensolver failed: {0}")]
    EigSolverFailure(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
