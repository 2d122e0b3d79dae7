use num_complex::Complex64;
use thiserror::Error;

/// Everything that can go wrong inside the numerics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("potential rejected: {0}")]
    Validation(String),

    #[error("quadrature did not converge (last two refinements {previous:e} and {last:e})")]
    Quadrature { previous: f64, last: f64 },

    #[error("k = 0 is a singular input for this kernel")]
    SingularInput,

    #[error("k = {k} lies outside the admissible domain: {reason}")]
    OutsideDomain { k: Complex64, reason: String },

    #[error("unresolved box [{re_lo}, {re_hi}] x [{im_lo}, {im_hi}]: {reason}")]
    UnresolvedBox {
        re_lo: f64,
        re_hi: f64,
        im_lo: f64,
        im_hi: f64,
        reason: String,
    },

    #[error("argument unwrapping failed between lambda = {a} and lambda = {b}")]
    Unwrap { a: f64, b: f64 },

    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    #[error("refusing to evaluate: {0}")]
    Refused(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that come from iterative numerics rather than bad input.
    pub fn is_non_convergence(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::NonConvergence(_)
                | Error::Unwrap { .. }
                | Error::UnresolvedBox { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
