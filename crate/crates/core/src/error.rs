use thiserror::Error;

/// Errors surfaced by grid construction, solvers and the ansatz machinery.
#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("grid dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),

    #[error("axis {axis} point count {points} is not a power of two >= 8")]
    BadPointCount { axis: usize, points: usize },

    #[error("axis {axis} box length {length} must be positive and finite")]
    BadLength { axis: usize, length: f64 },

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("negative weight {0} in the eps-weighted Sobolev norm")]
    NegativeWeight(f64),

    #[error("density floor violated: min(1 + n_eff) = {min_density}")]
    DensityFloorViolated { min_density: f64 },

    #[error("solver failed to converge: {iterations} iterations, residual {residual}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("monotone iterate decreased by {drop} at iteration {iteration} (lambda too small or discretization artifact)")]
    MonotonicityViolated { iteration: usize, drop: f64 },

    #[error("monotone solver requires |n|_inf < 1, got {sup}")]
    AmplitudeTooLarge { sup: f64 },

    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("profile slow time {t_slow} does not match eps*t = {expected}")]
    FrameMismatch { t_slow: f64, expected: f64 },

    #[error("profile cross-check mismatch {mismatch} exceeds {tol}: n1 does not solve the long-wave equation")]
    InconsistentProfiles { mismatch: f64, tol: f64 },

    #[error("omega^2 = {omega_sq} is a resonant root excluded from the equivalent dispersion form")]
    ResonantRoot { omega_sq: f64 },

    #[error("the long-wave reduction requires a > 0")]
    ZeroMagneticField,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field dump: {0}")]
    Dump(String),
}

pub type Result<T> = std::result::Result<T, Error>;
