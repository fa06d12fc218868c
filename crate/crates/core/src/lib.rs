//! Simulation library for stochastic optimizers on time-varying objectives.
//!
//! The crate has three layers:
//!
//! * problem definitions with analytic mean gradients and controlled drift
//!   ([`problems`], [`sched`]),
//! * the optimizers themselves and their projection machinery ([`optim`]),
//! * closed-form evaluation of the finite-time tracking and stationarity
//!   bounds together with the experiment harness that checks them against
//!   simulated runs ([`bounds`], [`metrics`], [`harness`]).
//!
//! Everything is deterministic given an experiment config and a seed; see
//! [`harness::run_single`].

pub mod bounds;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod sched;

pub use error::Error;

/// Dense vector of model parameters (iterates, targets, gradients, moments).
pub type ParamVec = Vec<f64>;
