use thiserror::Error;

/// Errors raised by the histories library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("matrix is not idempotent (max deviation {deviation:.3e})")]
    NotIdempotent { deviation: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("trace is {trace:.12}, expected 1")]
    BadTrace { trace: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix entries do not form a square array ({0})")]
    NotSquare(String),

    #[error("instrument projections do not sum to the identity (max deviation {deviation:.3e})")]
    IncompleteInstrument { deviation: f64 },

    #[error("instrument projections {first} and {second} are not orthogonal (max deviation {deviation:.3e})")]
    NonOrthogonal { first: usize, second: usize, deviation: f64 },

    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),

    #[error("invalid history prefix: {0}")]
    InvalidPrefix(String),

    #[error("horizon exceeded: {0}")]
    HorizonExceeded(String),

    #[error("cylinder sets overlap at word {word}")]
    OverlapDetected { word: String },

    #[error("windows overlap: function window starts at {function_start}, cylinder ends at {cylinder_end}")]
    WindowOverlap { function_start: usize, cylinder_end: usize },

    #[error("state has null weight {weight:.3e} on the functional")]
    NullWeight { weight: f64 },

    #[error("functional must be nonnegative: {0}")]
    NegativeFunctional(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid probability vector: {0}")]
    InvalidWeights(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cluster ambiguity: {0}")]
    ClusterAmbiguity(String),

    #[error("predicate endpoint {endpoint} coincides with p(1|{label})")]
    BoundaryPredicate { endpoint: f64, label: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
