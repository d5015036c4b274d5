//! Full AC network physics: power flow solution and reactance steering.
//!
//! [`pf`] solves the polar Newton-Raphson power flow and reports sending-end
//! branch flows, the quantities every steering experiment is judged against.
//! [`steer`] adjusts series reactances so those AC flows track a target
//! pattern, trading tracking error against deviation from a prior setpoint.

pub mod pf;
pub mod steer;

pub use pf::{
    acpf_solve, balance_error, flow_mismatch, mismatch_jacobian, nominal_flow_gap,
    with_unit_setpoints, AcState, MIN_SERIES_IMPEDANCE, PF_MAX_ITERATIONS, PF_MISMATCH_TOL,
};
pub use steer::{
    default_w_grid, steer_p3, w_sweep, SetpointLabel, SteerConfig, SteerResult, SweepRow,
    SweepScenario, SweepTable, BALANCE_TOL, MU_FACTOR, MU_ROUNDS, MU_START,
};
