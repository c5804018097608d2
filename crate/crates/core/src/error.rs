use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point contains a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("{role} is not in the kernel domain")]
    NotInDomain { role: &'static str },

    #[error("{role} is not in the interior of the kernel domain")]
    NotInterior { role: &'static str },

    #[error("Bregman distance is negative beyond round-off: {value:.3e} (clamp floor {floor:.3e})")]
    NegativeDistance { value: f64, floor: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("theta schedule invalid at k = {k}: {reason}")]
    ScheduleInvalid { k: usize, reason: String },

    #[error("subproblem oracle exceeded its inner-iteration budget ({spent} iterations)")]
    OracleBudget { spent: u64 },

    #[error("certificate rejected at outer iteration {k}: {reason}")]
    CertificateViolation { k: usize, reason: String },

    #[error("iterate left the admissible region at outer iteration {k}: {reason}")]
    IterateDomain { k: usize, reason: String },

    #[error("instance parse error: {0}")]
    Parse(String),

    #[error("linear assignment solver failed: {0}")]
    Assignment(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("projection did not converge: {0}")]
    Projection(String),

    #[error("reference solve did not converge: {0}")]
    ReferenceSolve(String),

    #[error("retained iterates required but not present in the trace")]
    MissingIterates,

    #[error("traces are not comparable: {0}")]
    TraceMismatch(String),

    #[error("averaged iterate undefined for k = 0")]
    EmptyAverage,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
