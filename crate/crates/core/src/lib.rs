//! Asymptotically optimal time-based rebalancing of multi-asset portfolios
//! under small proportional transaction costs, with a Monte Carlo harness
//! that measures discretely rebalanced strategies against the formulas.

pub mod error;
pub mod frictionless;
pub mod linalg;
pub mod market_models;
pub mod simulation;
pub mod asymptotics;
pub mod evaluation;

pub use error::{Error, Result};
