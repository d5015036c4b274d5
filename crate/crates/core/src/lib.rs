//! Power network modeling and optimization for studying how much control
//! over line flows is available when series reactances can be adjusted.
//!
//! The crate is organized in layers:
//!
//! - [`net`]: network data model, case file parsers, and graph structure
//!   (incidence matrix, cycle basis, bridges).
//! - [`opt`]: self-contained numerical optimization kernels (sparse LU,
//!   bounded-variable simplex, branch and bound, a diagonal-cost QP solver,
//!   and a Levenberg-Marquardt least-squares solver).
//! - [`dc`]: linearized power flow, flow-uniqueness and realizability
//!   analysis, and reactance recovery for target flows.
//! - [`scenario`]: reproducible demand scenario generation and optimal
//!   dispatch under line limits.
//! - [`siting`]: choosing which lines get adjustable reactance and sizing
//!   the required adjustment ranges.
//! - [`ac`]: full nonlinear power flow and reactance steering toward
//!   target flow patterns.

pub mod ac;
pub mod dc;
pub mod error;
pub mod net;
pub mod opt;
pub mod scenario;
pub mod siting;

pub use error::{Error, Result};
