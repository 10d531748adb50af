use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Gamma function evaluated at a non-positive integer.
    #[error("gamma function pole at x = {0}")]
    Pole(f64),

    /// A quadrature or series did not meet its error target.
    #[error("{what} did not converge: estimated error {estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    NonConvergence {
        what: String,
        estimate: f64,
        tolerance: f64,
    },

    /// Model hypothesis violated (for example alpha + H <= 1).
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Cholesky factorization failed at pivot {pivot} (value {value:.3e})")]
    Factorization { pivot: usize, value: f64 },

    /// A quantity that must be strictly positive was not.
    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Factorization { .. } | Error::Positivity(_)
        )
    }
}
