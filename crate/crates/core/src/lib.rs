//! Regression-tree estimation of conditional copulas.

pub mod compositional;
pub mod copula;
pub mod dataset;
pub mod error;
pub mod margins;
pub mod numeric;
pub mod pruning;
pub mod quadrature;
pub mod simulation;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
