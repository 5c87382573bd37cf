use thiserror::Error;

use crate::engine::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario schema violation: {0}")]
    Schema(String),

    #[error("malformed scenario JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("probability mass mismatch at node {node}: children sum to {children}, node carries {parent}")]
    ProbabilityMismatch { node: i64, parent: f64, children: f64 },

    #[error("negative clock increment {dkappa} at node {node}")]
    NegativeClock { node: i64, dkappa: f64 },

    #[error("clock mass {mass} on the path ending at node {leaf} exceeds the bound {bound}")]
    ClockBoundExceeded { leaf: i64, mass: f64, bound: f64 },

    #[error("every path carries zero clock mass")]
    ZeroClockMass,

    #[error("no strictly positive deflator exists (eps_star = {eps_star:.3e})")]
    NupbrFails { eps_star: f64 },

    #[error("not a deflator: {0}")]
    NotADeflator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver finished with status {status:?}: {context}")]
    Solver { status: SolveStatus, context: String },

    #[error("value function is not finite: {0}")]
    NotFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
