use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("participant index {index} out of range for {count} participants")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("participants {i} and {j} have coincident centers; gradient is undefined")]
    DegenerateGradient { i: usize, j: usize },

    #[error("direction is undefined for the zero position vector")]
    UndefinedDirection,

    #[error("projection is degenerate: participants {i} and {j} have coincident centers")]
    DegenerateProjection { i: usize, j: usize },

    #[error("projection did not converge in {max_iter} iterations (worst violation {violation:.3e})")]
    ProjectionIterationLimit { max_iter: usize, violation: f64 },

    #[error("post-contact velocities differ by {mismatch:.3e}; inputs are inconsistent")]
    InconsistentSegments { mismatch: f64 },

    #[error("contact geometry admits no control ratio: {reason}")]
    NoRatio { reason: String },

    #[error("no feasible branch found for the scenario")]
    NoFeasibleBranch,

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("no certificate: {0}")]
    NoCertificate(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("two-participant solver requires n = 2, got n = {0}")]
    NotTwoBody(usize),

    #[error("control sweep budget exceeded: {required} evaluations requested, limit {limit}")]
    SweepBudget { required: u64, limit: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
