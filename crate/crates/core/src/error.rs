use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected} coefficients, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class is not ample on {surface}: pairings {pairings:?}")]
    NotAmple {
        surface: String,
        pairings: Vec<String>,
    },

    #[error("unsupported surface: {0}")]
    UnsupportedSurface(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("form is not closed: max |q - p'| = {defect:.3e} exceeds {tol:.3e}")]
    NotClosed { defect: f64, tol: f64 },

    #[error("metric is not positive at node {node} (U' = {p:.3e}, U'' = {q:.3e})")]
    NotPositive { node: usize, p: f64, q: f64 },

    #[error("singular pairing system")]
    SingularSystem,

    #[error("class mismatch for {what}: measured pairings {measured:?}, expected {expected:?}")]
    ClassMismatch {
        what: &'static str,
        measured: Vec<f64>,
        expected: Vec<f64>,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    #[error("explicit scheme needs {0} sub-steps; use the implicit scheme")]
    TooStiff(u64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
