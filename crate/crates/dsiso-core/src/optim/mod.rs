//! Self-contained linear programming and branch-and-bound MILP backend.
//!
//! Small and deterministic by design: dense basis algebra, sparse rows,
//! centralized tolerances. This serves the gain-synthesis problems, which
//! are modest in size (at most a few thousand rows and a few hundred
//! binaries); it is not a general-purpose solver.

pub mod branch;
pub mod lpfile;
pub mod problem;
pub mod simplex;

pub use branch::solve_milp;
pub use lpfile::write_lp;
pub use problem::{Cmp, Constraint, LinearProgram, Sense, SolveResult, Status, Tolerances};
pub use simplex::{solve_lp, solve_lp_with_bounds};
