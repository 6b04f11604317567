use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive mass {0}")]
    NonPositiveMass(f64),

    #[error("integration produced non-finite values on segment {segment}")]
    IntegrationFailure { segment: usize },

    #[error("conic solver: factorization breakdown ({0})")]
    IllConditioned(String),

    #[error("conic solver: numerical error ({0})")]
    NumericalError(String),

    #[error("malformed cone program: {0}")]
    MalformedProgram(String),

    #[error("solution is not optimal (status {0})")]
    NotOptimal(String),

    #[error("tight set width {got} does not match catalog width {expected}")]
    InconsistentCatalog { expected: usize, got: usize },

    #[error("subproblem failed at iteration {iteration}: {source}")]
    SubproblemFailure {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run did not converge")]
    NotConverged,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("covariance is degenerate even after regularization")]
    DegenerateCovariance,

    #[error("predictor failed: {0}")]
    PredictorFailure(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("weights file: {0}")]
    Weights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
