use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Hypotheses of the necessary optimality condition that the gate checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    DensitySmoothness,
    InteriorBall,
    FieldSmoothness,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::DensitySmoothness => {
                write!(f, "density smoothness (initial measure must have a C1 density)")
            }
            Hypothesis::InteriorBall => {
                write!(f, "interior ball (target must be a union of balls of a positive radius)")
            }
            Hypothesis::FieldSmoothness => {
                write!(f, "field smoothness (vector field must be smooth in x)")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge; last two iterates {coarse} and {fine}")]
    QuadratureNonConvergence { coarse: f64, fine: f64 },

    #[error("non-finite coordinate produced for particle {index}")]
    NonFinite { index: usize },

    #[error("state escaped the overflow guard at t = {time}")]
    Overflow { time: f64 },

    #[error("time {t} outside the control horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("singular flow Jacobian: det = {det:e}")]
    SingularJacobian { det: f64 },

    #[error("boundary tracing did not close within {nodes} nodes")]
    BoundaryTrace { nodes: usize },

    #[error("transported boundary self-intersects at tau = {tau}")]
    MeshDegeneracy { tau: f64 },

    #[error("control value {value:?} is not in the control set")]
    ControlOutsideSet { value: Vec<f64> },

    #[error("extraction residual {residual:e} at t = {t}: target {target:?}, best control {best:?}")]
    ConvexityViolation {
        t: f64,
        residual: f64,
        target: Vec<f64>,
        best: Vec<f64>,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(Hypothesis),

    #[error("exhaustive search needs {count} evaluations, budget is {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("config: {0}")]
    Config(String),

    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::ControlOutsideSet { .. }
                | Error::Hypothesis(_)
                | Error::BudgetExceeded { .. }
                | Error::Config(_)
                | Error::Csv { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::TimeOutOfRange { .. }
        )
    }
}
