//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("n_points must be a power of two >= 64, got {0}")]
    GridSize(usize),

    #[error("grid half_width must be positive, got {0}")]
    GridWidth(f64),

    #[error("wavefunctions live on different grids")]
    GridMismatch,

    #[error("operation requires a {expected}-space wavefunction")]
    SpaceMismatch { expected: &'static str },

    #[error("wavefunction is not normalized: |psi|^2 = {0}")]
    Unnormalized(f64),

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("potential depth factor 1 + beta(t) is nonpositive at t = {t}: {value}")]
    DepthNonPositive { t: f64, value: f64 },

    #[error("landscape must contain one or two wells, got {0}")]
    WellCount(usize),

    #[error("state tail exceeds the grid: leaked norm {leaked:.3e}")]
    TailClipping { leaked: f64 },

    #[error("cubic phase winds faster than the grid resolves: {winding:.3} rad per dx")]
    PhaseAliasing { winding: f64 },

    #[error("localized lobes overlap too strongly for an orthogonal pair: |<L|R>| = {overlap:.3e}")]
    LobeOverlap { overlap: f64 },

    #[error("requested {requested} states but only {bound} are bound on this landscape")]
    UnboundStates { requested: usize, bound: usize },

    #[error("need at least {need} eigenstates, basis holds {have}")]
    InsufficientStates { need: usize, have: usize },

    #[error("state index {index} out of range for basis of {len} states")]
    StateIndex { index: usize, len: usize },

    #[error("basis is not orthonormal: max deviation {dev:.3e}")]
    NonOrthonormalBasis { dev: f64 },

    #[error("target matrix is not unitary: deviation {dev:.3e}")]
    NotUnitary { dev: f64 },

    #[error("norm drifted by {drift:.3e} at step {step}; reduce dt or enlarge the grid")]
    NormDrift { step: usize, drift: f64 },

    #[error("control sampled outside its domain: t = {t}, T = {t_max}")]
    ControlOutOfRange { t: f64, t_max: f64 },

    #[error("momentum kick {k} exceeds the safe band |k| <= {limit}")]
    KickTooLarge { k: f64, limit: f64 },

    #[error("trajectory is missing {what} records")]
    MissingRecords { what: &'static str },

    #[error("config: {0}")]
    Config(String),

    #[error("failed to parse {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
