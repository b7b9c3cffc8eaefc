use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("sensing channel lies inside the user-channel span (projected norm {projected:e} vs {total:e})")]
    DegenerateNullspace { projected: f64, total: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("probability {0} outside (0, 1)")]
    Probability(f64),

    #[error("infeasible scenario: maximum blocklength {l_max} does not exceed pilot length {l_p}")]
    InfeasibleBlocklength { l_max: f64, l_p: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("subproblem infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("nonpositive frozen denominator in {0}")]
    FrozenDenominator(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
