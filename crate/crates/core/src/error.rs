use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("parameter length mismatch for {kind}: expected {expected}, got {got}")]
    ParamLength {
        kind: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid ray: {0}")]
    InvalidRay(String),

    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate importance proposal: observed depth {depth} <= {min}")]
    DegenerateProposal { depth: f64, min: f64 },

    #[error("field kind `{0}` has no analytic gradient")]
    NotDifferentiable(&'static str),

    #[error("mixture weights are all zero")]
    ZeroMixture,

    #[error("ray {index}: {source}")]
    Ray {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite loss at iteration {iteration} (term `{term}`)")]
    NonFiniteLoss { iteration: u64, term: &'static str },

    #[error("scene placement failed after {restarts} restarts")]
    Placement { restarts: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("malformed image: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
