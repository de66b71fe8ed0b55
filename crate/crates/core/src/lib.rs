//! Fairness-constrained training for vertically partitioned data.
//!
//! `K` parties each hold a disjoint block of feature columns for the same
//! samples; a server coordinates them. Training minimizes a regularized
//! logistic loss subject to a bound on the difference of equal
//! opportunities (DEO) between two protected groups, solved as a min-max
//! problem by asynchronous gradient coordinate-descent on the parameter
//! blocks and projected gradient ascent on the two multipliers.
//!
//! Layers, bottom-up:
//! - [`model`]: losses, DEO, Lagrangians and their gradients.
//! - [`fedsim`]: party/server actors, the two wire messages, Q-bounded
//!   local updates with inconsistent reads, transcript auditing.
//! - [`optimizer`]: schedules, stationarity gap, the training loop.
//! - [`data`]: schema-driven ingestion and synthetic fixtures.
//! - [`metrics`]: accuracy, fairness, harmonic mean, reports.
//! - [`experiment`]: config files, artifact directories, the verify suite.

pub mod data;
pub mod error;
pub mod experiment;
pub mod fedsim;
pub mod metrics;
pub mod model;
pub mod numfmt;
pub mod optimizer;

pub use error::{Error, Result};
