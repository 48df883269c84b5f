//! Bayesian network vector autoregression for directed dyadic panels.

pub mod design;
pub mod diagnostics;
pub mod dyad;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod nvard;
pub mod sim;
pub mod vcnvard;

pub use error::{Error, Result};
