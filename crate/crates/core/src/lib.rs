//! Optimal consumption and investment on finite event-tree markets through
//! convex duality: deflator-based no-arbitrage checks, primal and dual
//! solvers, numerical verification of the duality relations, and a Monte
//! Carlo study of the inverse three-dimensional Bessel process.

pub mod bessel;
pub mod cli;
pub mod corpus;
pub mod deflator;
pub mod dual;
pub mod engine;
pub mod error;
pub mod lab;
pub mod market;
pub mod preferences;
pub mod primal;
pub mod scenario;

pub use error::{Error, Result};
pub use market::{parse_scenario, MarketModel};
pub use preferences::{UtilityField, UtilityKind};
pub use scenario::Scenario;
