use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent panel data.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Score class too large for exact enumeration.
    #[error("capacity exceeded: T = {t} is above the enumeration cap of {cap}")]
    Capacity { t: usize, cap: usize },

    /// Total score is 0 or T; the conditional distribution is a point mass.
    #[error("degenerate score class (y_plus = {y_plus}, T = {t})")]
    DegenerateClass { y_plus: usize, t: usize },

    #[error("no informative units: every unit has y_plus equal to 0 or T")]
    NoInformativeUnits,

    #[error("no informative pairs: total kernel weight is zero")]
    NoInformativePairs,

    /// Information matrix is (numerically) singular; `direction` spans its null space.
    #[error("parameter not identified: information matrix is singular along {direction:?} ({detail})")]
    NotIdentified { direction: Vec<f64>, detail: String },

    #[error("Newton-Raphson did not converge after {iterations} iterations (last |score| = {last_score_norm:e})")]
    NonConvergence {
        iterations: usize,
        last_score_norm: f64,
        loglik_trace: Vec<f64>,
    },

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
