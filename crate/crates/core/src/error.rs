use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = StapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StapError {
    #[error("numerical blowup: {0}")]
    NumericalBlowup(String),
    #[error("adaptive step size {step:e} fell below floor {floor:e}")]
    StepSizeUnderflow { step: f64, floor: f64 },
    #[error("solver failed at step {index}: {source}")]
    StepFailed {
        index: usize,
        #[source]
        source: Box<StapError>,
    },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("non-finite surrogate output at step {step}")]
    NonFiniteOutput { step: usize },
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("committee member {member} failed: {source}")]
    MemberFailed {
        member: usize,
        #[source]
        source: Box<StapError>,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sampling pattern has zero cost")]
    ZeroCostPattern,
    #[error("reference trajectory is identically zero")]
    ZeroReference,
    #[error("pool is empty")]
    EmptyPool,
    #[error("pool exhausted with {remaining} budget units left")]
    PoolExhausted { remaining: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("warmup blew up {attempts} times in a row for initial condition {index}")]
    WarmupExhausted { index: usize, attempts: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
}

impl StapError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StapError::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        StapError::Json { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            StapError::InvalidArchitecture(_)
                | StapError::InvalidModel(_)
                | StapError::InvalidConfig(_)
                | StapError::ShapeMismatch(_)
        )
    }
}
