//! Dual-path adiabatic evolution toolkit.
//!
//! Synthesizes pairs of interpolation schedules whose leading diabatic
//! errors point in opposite directions, simulates the time-ordered
//! evolutions exactly at small dimension, averages them with the
//! probabilistic linear-combination gadget, and evaluates Trotter-Suzuki
//! style query-cost bounds for running the whole construction on a
//! circuit machine.

pub mod error;
pub mod combiner;
pub mod hamiltonians;
pub mod paths;
pub(crate) mod quad;
pub mod schemes;
pub mod propagation;
pub mod spectral;

pub use error::{Error, Result};
