//! Proactive, prediction-driven scheduling of a single delay-constrained
//! packet over an i.i.d. fading channel.
//!
//! A source learns `window` slots ahead that a user *may* request a packet of
//! `B` bits at slot `t = 1`. During the prediction window it can push part of
//! the packet early, paying `(2^b - 1) / h` energy per slot, and must deliver
//! whatever remains in the deadline slot if the request actually arrives.
//! Slots are indexed in descending order: `window + 1, ..., 2, 1`.
//!
//! Modules:
//!
//! * [`energy`] – the per-slot energy model, packet bookkeeping and the
//!   reactive baseline.
//! * [`channel`] – gain distributions, sampling and inverse fractional moments.
//! * [`mobility`] – Markov location model and the request-probability estimator.
//! * [`offline`] – schedulers with non-causal channel knowledge (water-filling).
//! * [`online`] – causal schedulers: discretized dynamic program, certainty
//!   equivalent and the relaxed closed-form ("suboptimal II") policy.
//! * [`sim`] – Monte Carlo experiment engine with common random numbers.

pub mod channel;
pub mod energy;
mod error;
pub mod mobility;
pub mod offline;
pub mod online;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
