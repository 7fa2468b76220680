use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty intersection: {0}")]
    EmptyIntersection(String),

    #[error("ball not contained in the grid domain")]
    BallOutsideDomain,

    #[error("linear solve did not converge (relative residual {residual:.3e})")]
    SolveDiverged { residual: f64 },

    #[error("jump undefined: {0}")]
    JumpUndefined(String),

    #[error("separation unachievable at grid resolution: {0}")]
    SeparationUnachievable(String),

    #[error("not enough data: {0}")]
    NotEnoughData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
