//! Deterministic simulator and analysis engine for federated learning in
//! which devices sense new training samples every round, train locally, and
//! aggregate over a noisy analog uplink.
//!
//! The crate is organized around the round pipeline:
//!
//! * [`model`] — parameter vectors, sensing schedules, aggregation weights;
//! * [`data`] — sample batches, pool file formats, synthetic generators;
//! * [`sensing`] — arrival schedules, IID/Dirichlet partitioning, sensing;
//! * [`learning`] — loss/gradient engines and both local-update paths;
//! * [`channel`] — over-the-air aggregation and its error accounting;
//! * [`cost`] — latency/energy bookkeeping;
//! * [`analysis`] — the gradient-decomposition identity, constant
//!   estimators, and convergence-bound evaluation;
//! * [`harness`] — experiment orchestration, sweeps, and report files.

pub mod analysis;
pub mod channel;
pub mod config;
pub mod cost;
pub mod data;
pub mod error;
pub mod harness;
pub mod learning;
pub mod model;
pub mod rng;
pub mod sensing;

pub use error::{Error, Result};
