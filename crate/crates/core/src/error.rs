use thiserror::Error;

/// Coarse classification used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at {0}")]
    NonFinite(String),

    #[error("invalid rank: {0}")]
    InvalidRank(String),

    #[error("not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigendecomposition of a {dim}x{dim} matrix did not converge (residual bound {residual:e})")]
    NoConvergence { dim: usize, residual: f64 },

    #[error("pattern not represented in tensor (quadratic form {0:e})")]
    PatternNotRepresented(f64),

    #[error("background pattern {index}: {source}")]
    BackgroundPattern {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model not proportional: {0}")]
    NotProportional(String),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("silhouette undefined: {0}")]
    SilhouetteUndefined(String),

    #[error("{0}")]
    Parse(String),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(step: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Step {
            step,
            source: Box::new(source),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::InvalidRank(_) | Error::NotIdentifiable(_) => {
                ErrorKind::Usage
            }
            Error::DimensionMismatch(_)
            | Error::NonFinite(_)
            | Error::TooFewSamples(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::NotSymmetric(_)
            | Error::NoConvergence { .. }
            | Error::PatternNotRepresented(_)
            | Error::NotProportional(_)
            | Error::SilhouetteUndefined(_) => ErrorKind::Numerical,
            Error::BackgroundPattern { source, .. } | Error::Step { source, .. } => source.kind(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
