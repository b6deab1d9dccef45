//! Independent ground truth for the QBD solver: a direct stationary solve
//! of the truncated chain, and a discrete-event simulation.

mod simulate;
mod truncated;

pub use simulate::{
    simulate, simulate_observed, simulate_rates, ChainRates, SimulationConfig, SimulationEstimate,
    Transition,
};
pub use truncated::{
    gth_stationary, truncated_direct_solve, TruncatedSolveResult, MIN_ORACLE_LEVEL, TAIL_MASS_LIMIT,
};
