//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Case file could not be parsed. Carries the file path, the 1-based
    /// line number, and a description of the offending field.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("network graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("no slack bus in case data")]
    NoSlack,

    #[error("multiple slack buses in case data: {0:?}")]
    MultipleSlack(Vec<usize>),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("bus injections do not balance: sum(p) = {sum:.3e} p.u.")]
    UnbalancedInjections { sum: f64 },

    /// The DC system matrix is singular for the given reactance vector,
    /// i.e. the uniqueness condition on the cycle matrix fails.
    #[error("singular DC power-flow system for the given reactance vector")]
    SingularSystem,

    #[error("target flow pattern is not realizable with positive reactances")]
    NotRealizable,

    #[error("linear program reported {status} where a solution was required")]
    UnexpectedLpStatus { status: String },

    #[error("solver fault: {0}")]
    SolverFault(String),

    /// Analytic Jacobian disagrees with finite differences at the start point.
    #[error(
        "jacobian check failed at start point: entry ({row},{col}) analytic {analytic:.6e} vs finite-difference {fd:.6e}"
    )]
    JacobianMismatch {
        row: usize,
        col: usize,
        analytic: f64,
        fd: f64,
    },

    #[error("AC power flow did not converge after {iterations} iterations (max mismatch {mismatch:.3e} p.u.)")]
    AcDiverged { iterations: usize, mismatch: f64 },

    #[error("scenario pipeline produced an empty dataset ({requested} requested, all filtered)")]
    EmptyDataset { requested: usize },

    #[error("selection out of range: stride {stride} and count {count} exceed set size {len}")]
    SelectionOutOfRange {
        stride: usize,
        count: usize,
        len: usize,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
