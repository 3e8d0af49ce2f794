use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular jacobian in newton iteration")]
    SingularJacobian,
    #[error("matrix E is singular (|det E| = {det:e})")]
    SingularE { det: f64 },
    #[error("height {u} is not attained on the admissible z-interval")]
    OutOfRange { u: f64 },
    #[error("solution leaves the declared domain: {0}")]
    OutsideDomain(String),
    #[error("function has no pieces")]
    EmptyFunction,
    #[error("section is empty")]
    EmptySection,
    #[error("g-cone subgradient set is empty")]
    EmptyCone,
    #[error("domain is empty")]
    EmptyDomain,
    #[error("radius {radius} exceeds admissible bound {bound}")]
    RadiusTooLarge { radius: f64, bound: f64 },
    #[error("source masses sum to {source_total} but target mass is {target_total}")]
    MassImbalance { source_total: f64, target_total: f64 },
    #[error("pin height {u0} with bound {reach} leaves the height interval [{lo}, {hi}]")]
    PinOutOfRange { u0: f64, reach: f64, lo: f64, hi: f64 },
    #[error("solver stalled at sweep {sweep} with residual {residual:e}")]
    Stalled { sweep: usize, residual: f64 },
    #[error("pinned piece no longer supports any target point")]
    PinLost,
    #[error("solver hit the sweep cap with residual {residual:e}")]
    MaxIterExceeded { sweep: usize, residual: f64 },
    #[error("cell {cell} stayed empty at the mass floor")]
    EmptyCellAtFloor { cell: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;
