use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown activation `{0}`")]
    Catalog(String),

    #[error("cannot compose `{outer}` onto this series: {reason}")]
    CompositionUnsupported { outer: String, reason: String },

    #[error("coefficient ratio undefined at index {index} (zero coefficient)")]
    RatioUndefined { index: usize },

    #[error("regime fit failed: {0}")]
    Fit(String),

    #[error("integer width exceeded computing {0}")]
    Width(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("series degree {available} too short; need at least {required}")]
    InsufficientDegree { required: usize, available: usize },

    #[error("eigenvalue series for m = {m} did not reach tolerance within {terms} available terms")]
    Truncation { m: usize, terms: usize },

    #[error("spectrum truncated too early: {0}")]
    ExtendDegree(String),

    #[error("nonpositive eigenvalue at index {0}")]
    Positivity(usize),

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unrealizable source condition: eigenvalue of degree {0} is zero")]
    UnrealizableSource(usize),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
