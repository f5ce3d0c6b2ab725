use thiserror::Error;

/// Errors produced across model building, spectral evaluation, simulation
/// and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vector of length {0} is not the vectorization of a square matrix")]
    NotSquareLength(usize),

    #[error("{what} is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitianInput { what: &'static str, deviation: f64 },

    #[error("eigenvector matrix is ill-conditioned (cond = {cond:.3e}); matrix is numerically non-diagonalizable")]
    DefectiveMatrix { cond: f64 },

    #[error("eigendecomposition reconstruction residual {residual:.3e} exceeds bound {bound:.3e}")]
    InaccurateDecomposition { residual: f64, bound: f64 },

    #[error("eigendecomposition did not converge")]
    EigenSolverFailed,

    #[error("no eigenvalue passes the steady-state threshold (smallest |lambda| = {smallest:.3e}, threshold {threshold:.3e})")]
    NoSteadyState { smallest: f64, threshold: f64 },

    #[error("{count} eigenvalues pass the steady-state threshold; the kernel is degenerate")]
    MultipleSteadyStates { count: usize },

    #[error("superoperator has a non-decaying mode outside the kernel (lambda = {re:.3e}{im:+.3e}i)")]
    UnstableMode { re: f64, im: f64 },

    #[error("superoperator is not trace preserving (deviation {0:.3e})")]
    NotTracePreserving(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("time argument must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("time arguments must be pairwise distinct")]
    EqualTimes,

    #[error("at least one time argument is required")]
    NoTimes,

    #[error("unsupported order {0}")]
    UnsupportedOrder(usize),

    #[error("imaginary residue {residue:.3e} of {what} exceeds bound {bound:.3e}")]
    ImaginaryResidue {
        what: &'static str,
        residue: f64,
        bound: f64,
    },

    #[error("state norm {norm:.3e} exceeded the blow-up limit at step {step}")]
    StateBlowup { step: usize, norm: f64 },

    #[error("time step {dt} violates the stability guard (dt * rate = {product:.3e} > 0.1)")]
    StepTooLarge { dt: f64, product: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trajectory format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
