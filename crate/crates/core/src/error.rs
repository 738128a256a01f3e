use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("register of {dim}^{particles} amplitudes exceeds the limit of {limit}")]
    RegisterTooLarge {
        dim: usize,
        particles: usize,
        limit: usize,
    },
    #[error("particle {index} out of range for a {particles}-particle register")]
    ParticleIndex { index: usize, particles: usize },
    #[error("shape mismatch: ({0}, {1}) vs ({2}, {3})")]
    Shape(usize, usize, usize, usize),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("{0}")]
    Domain(String),
    #[error("state carries weight {0:e} outside the measured family span")]
    OutsideSpan(f64),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error("protocol state error: {0}")]
    ProtocolState(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
