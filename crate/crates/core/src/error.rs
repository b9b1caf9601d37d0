use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("size guard: {0}")]
    SizeGuard(String),
    #[error("singular matrix at pivot {0}")]
    Singular(usize),
    #[error("invalid covering: {0}")]
    InvalidCovering(String),
    #[error("height function is path dependent at face ({0}, {1})")]
    PathDependent(i32, i32),
    #[error("decomposition failure: {0}")]
    Decomposition(String),
    #[error("mirror tie at meeting point ({0}, {1})")]
    MirrorTie(i32, i32),
    #[error("interface face {label} = ({x}, {y}) outside the diamond")]
    OutOfBounds { label: String, x: i64, y: i64 },
    #[error("floor argument {value} within guard band of an integer ({label})")]
    GuardBand { label: String, value: f64 },
    #[error("quadrature did not converge: {0}")]
    NoConvergence(String),
    #[error("forest error: {0}")]
    Forest(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
