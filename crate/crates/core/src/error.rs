use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid hyperparameters ({alpha}, {beta}): both must be positive and finite")]
    InvalidHyper { alpha: f64, beta: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Every particle ended up with zero weight.
    #[error("particle system degenerated at step {step}")]
    Degenerate { step: usize },

    /// The pinned reference particle received zero weight.
    #[error("reference trajectory has zero weight at step {step}")]
    ReferenceRejected { step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("iteration {iteration}, datasets {datasets:?}: {source}")]
    Sweep {
        iteration: usize,
        datasets: Vec<usize>,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by weight collapse rather than bad input.
    pub fn is_degeneracy(&self) -> bool {
        match self {
            Error::Degenerate { .. } | Error::ReferenceRejected { .. } => true,
            Error::Sweep { source, .. } => source.is_degeneracy(),
            _ => false,
        }
    }
}
