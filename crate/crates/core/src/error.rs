use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("SVD did not converge")]
    SvdNotConverged,

    #[error("eigenvalue iteration did not converge within {iterations} iterations")]
    EigenNotConverged { iterations: usize },

    #[error("QZ iteration on the {size}x{size} pencil did not converge")]
    QzNotConverged { size: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("assumption structurally violated: {0}")]
    StructuralViolation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("original pair (A, B) is not controllable (Kalman rank {rank} < n = {n})")]
    Uncontrollable { rank: usize, n: usize },

    #[error(
        "rank target rho = {rho} is infeasible: the fixed-z problem is feasible if and only if \
         rho >= n + q - rank(F) + 1 = {floor}"
    )]
    InfeasibleRank { rho: usize, floor: usize },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("SDP solver failed: {0}")]
    Solver(String),

    #[error("steady-state equations are singular: rank {rank} < {expected}")]
    SingularSteadyState { rank: usize, expected: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
