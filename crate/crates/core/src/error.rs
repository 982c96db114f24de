use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    /// A parameter violates its admissible domain.
    #[error("invalid parameter `{field}`: {reason}")]
    Domain { field: &'static str, reason: String },

    /// A run configuration is malformed or inconsistent.
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// The tridiagonal operator fails the invertibility condition `beta != |alpha|`.
    #[error("singular tridiagonal system: beta = |alpha| = {beta}")]
    SingularSystem { beta: f64 },

    /// A pivot of the tridiagonal elimination vanished.
    #[error("tridiagonal elimination broke down at row {row} (pivot {pivot:e})")]
    NumericalBreakdown { row: usize, pivot: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A price violates the static no-arbitrage band.
    #[error("price {price} outside the no-arbitrage band ({lower}, {upper})")]
    OutOfBand { price: f64, lower: f64, upper: f64 },

    #[error("quadrature did not converge: doubling the grid moved the price by {delta:e}")]
    NonConvergence { delta: f64 },

    #[error("zero denominator in convergence ratio")]
    ZeroDenominator,

    #[error("i/o error: {0}")]
    Io(String),
}

impl PricingError {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        PricingError::Domain {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        PricingError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            PricingError::Domain { .. } | PricingError::Config { .. } | PricingError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, PricingError>;
