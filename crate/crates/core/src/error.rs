use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{0}")]
    InvalidInput(String),

    #[error("field is not normalized: norm = {norm}")]
    NotNormalized { norm: f64 },

    #[error("field is entirely below the node threshold")]
    AllMasked,

    #[error("scheme {scheme} is not available on a {boundary} grid")]
    SchemeMismatch {
        scheme: &'static str,
        boundary: &'static str,
    },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("eigensolver did not converge (max residual {max_residual:e})")]
    NonConvergence { max_residual: f64 },

    #[error("requested {requested} states but the discrete space has only {available}")]
    TooManyStates { requested: usize, available: usize },

    #[error("need at least {needed} time slices, got {got}")]
    TooFewSlices { needed: usize, got: usize },

    #[error("trajectory {id} left the grid at t = {time}")]
    TrajectoryExit { id: usize, time: f64 },

    #[error("sampling guard violated: store interval times max speed {reach:.4} exceeds {limit:.4}")]
    SamplingGuard { reach: f64, limit: f64 },

    #[error("point outside the validity domain of the {action} action at t = {time}")]
    ValidityDomain { action: &'static str, time: f64 },

    #[error("time grids do not match")]
    TimeMismatch,

    #[error("variational basis is degenerate (pairing determinant {det:e})")]
    SingularPairing { det: f64 },

    #[error("fit window [{start}, {end}] does not fit inside a trajectory ending at {t_end}")]
    FitWindow { start: f64, end: f64, t_end: f64 },
}
