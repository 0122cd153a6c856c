//! Simulation and analysis of dynamic min/max-consensus over open multi-agent
//! networks, where agents join and leave while the network tracks the
//! extremum of time-varying reference signals.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: undirected snapshots, diameter, generators and churn.
//! * [`signals`]: per-agent reference signals with a certified slope bound.
//! * [`protocols`]: the approximate (decaying) and exact (cascade) update rules
//!   for both max and min tracking.
//! * [`bounds`]: closed-form transient/convergence times and error bands, and
//!   their empirical detection on error traces.
//! * [`special`] and [`size_estimation`]: anonymous network size estimation
//!   from maxima of uniform draws and its expected value.
//! * [`scenario`] and [`simulator`]: declarative scenarios, the tick loop,
//!   traces and run summaries.

pub mod bounds;
pub mod error;
pub mod graph;
pub mod protocols;
pub mod scenario;
pub mod signals;
pub mod simulator;
pub mod size_estimation;
pub mod special;
pub mod streams;

pub use error::{Error, Result};
