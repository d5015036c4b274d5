//! Self-contained numerical optimization kernels.
//!
//! Everything downstream (flow analysis, dispatch, siting, steering) is
//! built on the four solvers in this module: a bounded-variable simplex
//! over sparse constraint matrices, branch and bound on top of it, an
//! operator-splitting solver for convex quadratic programs with diagonal
//! cost, and a damped least-squares solver for the nonlinear fits.

pub mod lm;
pub mod lp;
pub mod milp;
pub mod qp;
pub mod sparse;

pub use lm::{lm_solve, LeastSquares, LmOptions, LmReport};
pub use lp::{lp_solve, lp_solve_warm, LinearProgram, LpBasis, LpOutcome, LpSolution, INF};
pub use milp::{milp_solve, MilpOptions, MilpOutcome, MixedIntegerProgram};
pub use qp::{qp_solve, QpOptions, QpOutcome, QpSolution, QuadraticProgram};
pub use sparse::{BasisFactorization, CscMatrix, LuFactors};
