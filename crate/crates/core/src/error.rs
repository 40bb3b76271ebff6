use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("elements belong to different algebra instances")]
    AlgebraMismatch,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("algebra invariant violated: {0}")]
    InvariantFailure(String),
    #[error("element is zero")]
    ZeroElement,
    #[error("element is not nilpotent (residual {0:.3e})")]
    NotNilpotent(f64),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("element is not critical (residual {residual:.3e}, a = {a:.6})")]
    NotCritical { residual: f64, a: f64 },
    #[error("element is not in p")]
    NotInP,
    #[error("degenerate Killing form value {0}")]
    DegenerateKilling(f64),
    #[error("ad h has non-integer weights (deviation {0:.3e})")]
    NonIntegerWeights(f64),
    #[error("isotype r = {0} does not occur")]
    InvalidIsotype(usize),
    #[error("iteration limit reached after {0} steps")]
    MaxIterations(usize),
    #[error("flow left the orbit (nilpotency residual {0:.3e})")]
    LeftOrbit(f64),
    #[error("integration blew up at t = {0}")]
    BlowUp(f64),
    #[error("iteration did not converge (residual {0:.3e})")]
    NotConverged(f64),
    #[error("singular solve at order {k}: residual {residual:.3e}")]
    SingularSolve { k: usize, residual: f64 },
    #[error("bad free datum at order {k}: {reason}")]
    BadFreeDatum { k: usize, reason: String },
    #[error("series outside its convergence radius (root estimate {0:.4})")]
    OutOfRadius(f64),
    #[error("Newton iteration diverged (residual {0:.3e})")]
    NewtonDiverged(f64),
    #[error("xi must be nonzero")]
    ZeroXi,
    #[error("constraint violated: {0}")]
    Constraint(String),
}

pub type Result<T> = std::result::Result<T, OrbitError>;

impl OrbitError {
    /// True for failures of a numerical procedure on valid input, false for
    /// invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::NoSolution(_)
                | Self::MaxIterations(_)
                | Self::LeftOrbit(_)
                | Self::BlowUp(_)
                | Self::NotConverged(_)
                | Self::SingularSolve { .. }
                | Self::OutOfRadius(_)
                | Self::NewtonDiverged(_)
        )
    }
}
