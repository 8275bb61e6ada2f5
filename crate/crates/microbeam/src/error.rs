use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0:?}")]
    InvalidConfig(Vec<String>),

    #[error("ill-posed anchoring: {0}")]
    IllPosedAnchoring(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("grid too coarse: need at least {needed} points, got {got}")]
    GridTooCoarse { needed: usize, got: usize },

    #[error("transversal coordinate ({x2}, {x3}) outside the slice half-extent {half_extent}")]
    TransversalOutOfRange { x2: f64, x3: f64, half_extent: f64 },

    #[error("load mismatch: {0}")]
    LoadMismatch(String),

    #[error("inadmissible test direction: {0}")]
    InadmissibleTest(String),

    #[error("non-finite data: {0}")]
    NonFinite(String),

    #[error("indefinite discrete Hessian: {0}")]
    IndefiniteHessian(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
