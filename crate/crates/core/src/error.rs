use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid factor space: {0}")]
    InvalidSpace(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("hypergeometric series did not converge within {0} terms")]
    NoConvergence(usize),
    #[error("hypergeometric series lost its precision to cancellation")]
    Cancellation,
    #[error("quadrature did not reach the requested tolerance")]
    Quadrature,
    #[error("model matrix is rank deficient")]
    RankDeficient,
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("model set is empty")]
    EmptyModelSet,
    #[error("design space too large for exhaustive search: {0}")]
    DesignSpaceOverflow(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence(_)
                | Error::Cancellation
                | Error::Quadrature
                | Error::RankDeficient
                | Error::Degenerate(_)
                | Error::NotPositiveDefinite
        )
    }
}
