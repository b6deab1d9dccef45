//! Matrix-analytic toolkit for multi-phase working-vacation queues.
//!
//! A single server slows down after every arrival or service completion
//! (phases `1..m-1`, service rates `d_i * mu`) and takes a full vacation in
//! phase `m`, which ends after an `Exp(lambda / 2)` delay with two extra
//! customers in the system and the server back in phase 1.
//!
//! * [`model`] builds the generator blocks and a truncated generator.
//! * [`stability`] has the mean-drift stability test and the four-phase
//!   cubic analysis.
//! * [`qbd`] solves the level-paired quasi-birth-and-death process with the
//!   R-matrix iteration.
//! * [`oracles`] holds two independent checks: a direct solve of the
//!   truncated chain and a seeded discrete-event simulation.
//! * [`analysis`] compares against M/M/1 and locates the load interval where
//!   the vacation queue is shorter.
//! * [`cli`] is the command-line front end.

// `!(x > 0.0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
mod error;
pub mod linalg;
pub mod model;
pub mod oracles;
pub mod qbd;
pub mod stability;

pub use error::{Error, Result};
pub use model::{BlockSet, State, VacationModel};
pub use qbd::{RateMatrixSolution, SolverOptions, StationarySolution};
