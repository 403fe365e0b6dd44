//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: N = {0} (need N >= 16)")]
    GridTooCoarse(usize),
    #[error("field length {got} does not match grid size {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("singular linear system")]
    SingularSystem,
    #[error("operator near-singular: condition estimate {0:.3e}")]
    NearSingular(f64),
    #[error("profile not monotone: min slope {0:.3e}")]
    NotMonotone(f64),
    #[error("profile has mixed concavity")]
    MixedConcavity,
    #[error("endpoint curvature nonzero: |U''| = {0:.3e} at a wall")]
    EndpointCurvatureNonzero(f64),
    #[error("degenerate time difference: t = s")]
    DivisionDegenerate,
    #[error("boundary layer too wide: nu^(1/3) |k|^(-1/3) = {0:.3e} >= 1/2")]
    LayerTooWide(f64),
    #[error("lambda integral tail did not converge")]
    NonConvergentTail,
    #[error("CFL violation: dt * k * |U|_inf = {0:.3e} > 1")]
    CflViolation(f64),
    #[error("blowup detected at t = {t:.3}: mode norm {norm:.3e}")]
    BlowupDetected { t: f64, norm: f64 },
    #[error("time series is not decaying: slope {0:.3e} >= 0")]
    NonDecaying(f64),
    #[error("degenerate fit: need >= 3 points with distinct abscissae")]
    DegenerateFit,
    #[error("wavenumber must be nonzero")]
    InvalidWavenumber,
    #[error("invalid manifest: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
