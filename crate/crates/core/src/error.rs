use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("node {0} has no neighbor with positive weight")]
    IsolatedNode(usize),

    #[error("no connected sample found after {attempts} attempts")]
    DisconnectedAfterRetries { attempts: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("negative weight on line {line}")]
    NegativeWeight { line: usize },

    #[error("input is not symmetric: entry ({i}, {j}) has no matching reverse entry")]
    AsymmetricInput { i: usize, j: usize },

    #[error("state left the positive sector at node {index}{}", step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    NonpositiveState { index: usize, step: Option<usize> },

    #[error("lambda[{0}] = 0; model this agent as pinned instead")]
    DivisionByZeroLambda(usize),

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("spread did not decay enough to fit a rate")]
    InsufficientDecay,

    #[error("Newton solver did not converge in {iters} iterations (residual {residual:e})")]
    MaxIterExceeded { iters: usize, residual: f64 },

    #[error("singular Jacobian at Newton iteration {iter}")]
    SingularJacobian { iter: usize },

    #[error("linear system is singular (every lambda equals 1: consensus family)")]
    SingularSystem,

    #[error("agent {agent} can lower its payout by {gain:e} by moving to {candidate}")]
    NashViolation { agent: usize, candidate: f64, gain: f64 },

    #[error("multistart roots disagree by {agreement:e} (limit {limit:e})")]
    MultistartDisagreement { agreement: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::Parse { .. }
            | Error::NegativeWeight { .. }
            | Error::AsymmetricInput { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::DivisionByZeroLambda(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
