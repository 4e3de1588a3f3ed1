use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpeError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("propensity must be positive, got {value} at round {round}")]
    NonPositivePropensity { round: usize, value: f64 },

    #[error("missing cross-propensity g_{t}(A({s})|X({s}))")]
    MissingCrossPropensity { t: usize, s: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl OpeError {
    /// True for errors caused by a malformed configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, OpeError::Config(_) | OpeError::Json(_))
    }
}

pub type Result<T, E = OpeError> = std::result::Result<T, E>;
