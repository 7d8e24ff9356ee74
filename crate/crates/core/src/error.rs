use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no feasible level found up to {cap:e}")]
    Infeasible { cap: f64 },

    #[error("invalid state: {0}")]
    State(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mode {index} is a Barabanov matrix (common modulus {gamma:.6e})")]
    Barabanov { index: usize, gamma: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
