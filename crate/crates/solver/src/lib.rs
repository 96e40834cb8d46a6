//! Deterministic numerical backends.
//!
//! * [`lp`]: dense two-phase simplex with dual certificates.
//! * [`barrier`]: log-barrier Newton method for smooth convex programs.
//! * [`subgradient`]: projected subgradient method for nonsmooth convex objectives.
//! * [`knapsack`]: exact greedy solver for the continuous knapsack problem.
//! * [`assignment`]: exact assignment of items to a few bins with fixed counts.
//! * [`cutting_plane`]: Kelley cutting planes for low-dimensional polyhedral objectives.
//!
//! Everything here is single-threaded and free of shared mutable state, so
//! separate instances can be solved concurrently.

pub mod assignment;
pub mod barrier;
pub mod cutting_plane;
pub mod knapsack;
pub mod lp;
pub mod subgradient;

pub use assignment::{assign_to_bins, BinAssignment};
pub use barrier::{
    minimize_barrier, ArrowMatrix, BarrierEval, BarrierOptions, BarrierProblem, BarrierReport,
    EvalBuilder,
};
pub use cutting_plane::{minimize_polyhedral, CuttingPlaneOptions, CuttingPlaneResult};
pub use knapsack::{greedy_knapsack, KnapsackInstance, KnapsackSolution};
pub use lp::{
    solve_lp, LinearConstraint, LpError, LpInstance, LpSolution, LpStatus, Relation, Sense,
};
pub use subgradient::{
    minimize_convex, ConvergenceReport, ConvexProblem, StepRule, SubgradientOptions,
};
