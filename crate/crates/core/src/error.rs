use thiserror::Error;

/// Error type shared by the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("numeric error: {msg} (residual {residual:.3e})")]
    Numeric { msg: String, residual: f64 },

    #[error("field is not invertible: {0}")]
    NotInvertible(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("least-squares fit error: {0}")]
    Fit(String),

    #[error("evaluation outside domain of definition: {0}")]
    DomainEval(String),

    #[error("undefined trace direction: {0}")]
    UndefinedDirection(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
