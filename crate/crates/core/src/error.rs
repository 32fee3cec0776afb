use thiserror::Error;

/// Errors raised by the numerical layers and the experiments built on them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {got} values but the grid has {expected} interior nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("field value at node {0} is not finite")]
    NonFinite(usize),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shifted system is singular: pivot {index} has magnitude {magnitude:e}")]
    SingularShift { index: usize, magnitude: f64 },

    #[error("inverse iteration did not converge after {0} iterations")]
    EigenvectorNoConvergence(usize),

    #[error("newton iteration stalled after {iterations} iterations (residual {residual:e})")]
    NewtonMaxIterations { iterations: usize, residual: f64 },

    #[error("newton jacobian is singular at pivot {index}")]
    SingularJacobian { index: usize },

    #[error("time step {dt} violates the stability bound dt * Lip(F) <= 1/2 (Lip = {lipschitz})")]
    StepTooLarge { dt: f64, lipschitz: f64 },

    #[error("model is not certified dissipative: max violation {0:e}")]
    NotDissipative(f64),

    #[error("radius {radius} is below the trajectory's sup H1 norm {observed}")]
    RadiusTooSmall { radius: f64, observed: f64 },

    #[error("perturbation family does not share one derivative bound: {0}")]
    InconsistentFamily(String),

    #[error("cutoff {0} is not monitored and no snapshots are available")]
    TailNotMonitored(f64),

    #[error("linearization at 0 is resonant (kernel gap {gap:e} below tolerance {tol:e})")]
    ResonantAtZero { gap: f64, tol: f64 },

    #[error("linearization at infinity is resonant (kernel gap {gap:e} below tolerance {tol:e})")]
    ResonantAtInfinity { gap: f64, tol: f64 },

    #[error("the trivial equilibrium has no unstable direction (m' = 0)")]
    NoUnstableDirection,

    #[error("Morse indices coincide (m = m' = {0}); no connection is forced")]
    EqualMorseIndices(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {value}"),
        })
    }
}
