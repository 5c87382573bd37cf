//! Self-contained optimisation engine: a simplex LP solver and a
//! log-barrier Newton solver for smooth convex programs.

pub mod barrier;
pub mod linalg;
pub mod lp;

pub use barrier::{solve_convex, solve_convex_with, BarrierOptions, ConvexSolution, Objective, SmoothConvexProgram};
pub use lp::{solve_lp, LinearProgram, LpBuilder, LpSolution, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration-limit",
        };
        f.write_str(s)
    }
}
