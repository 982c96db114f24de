//! Hybrid tree/finite-difference and Monte Carlo pricing of European and
//! American options under the Bates and Bates-Hull-White models.

pub mod analytics;
pub mod cli;
pub mod error;
pub mod htfd;
pub mod lattice;
pub mod mc;
pub mod model;
pub mod pide;

pub use error::{PricingError, Result};
