use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("prox returned a point where the potential is not finite")]
    BrokenProx,

    #[error("{solver} did not converge in {iterations} iterations (final residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite Hessian entry in the Newton prox (class {class}); try damping or a smaller lambda")]
    NonFiniteHessian { class: usize },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(&'static str),

    #[error("all importance weights are zero")]
    ZeroWeights,

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("sampler accepted nothing in the first {0} post-warmup iterations; step size is mis-tuned")]
    SamplerStuck(usize),

    #[error("data format error: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
