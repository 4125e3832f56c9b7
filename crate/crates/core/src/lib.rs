//! Discrete-event simulation of entanglement distribution over linear chains
//! of quantum repeaters.
//!
//! Two establishment protocols are modelled on the same physical layer:
//!
//! * [`hopper`]: asynchronous, hop-by-hop establishment. Each node decides
//!   locally which memory cell to use towards its successor, swaps as soon as
//!   both halves are available and carries the Bell-measurement outcomes in
//!   the request that travels to the destination.
//! * [`sync`]: the time-slotted baseline where every slot has a local
//!   entanglement phase, a common swapping phase and one round trip of
//!   classical signalling.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, experiment sweeps
//! and the command-line front end live in the `hopper-sim` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod engine;
pub mod error;
pub mod fidelity;
pub mod hopper;
pub mod network;
pub mod params;
pub mod physical;
pub mod rng;
pub mod runtime;
pub mod sync;
pub mod time;

pub use error::ConfigError;
pub use fidelity::{dephase, swap_fidelity, Fidelity};
pub use params::PhysicalParams;
pub use rng::SimRng;
pub use runtime::{run_replication, run_replication_with, Protocol, RunMetrics, RunOptions, RunOutput, Scenario};
pub use time::SimTime;
