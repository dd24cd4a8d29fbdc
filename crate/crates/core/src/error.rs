use thiserror::Error;

/// Errors raised by the sampling, estimation and optimization layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A point fell outside the support of a density, or an argument outside
    /// the domain of a special function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector or matrix had the wrong length for its role.
    #[error("shape error: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },

    /// Invalid user-facing configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Every importance weight in a batch was zero.
    #[error("degenerate batch: all importance weights are zero")]
    DegenerateBatch,

    /// A log-weight exceeded the overflow threshold.
    #[error("importance weight overflow (log weight {0:.3e})")]
    WeightOverflow(f64),

    /// A non-finite value reached an optimizer or an objective.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A quadrature refinement failed to reach its tolerance.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// No ground-truth oracle exists for the requested target/proposal pair.
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
