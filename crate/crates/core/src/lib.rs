//! Transfer-parameter auto-tuning.
//!
//! Picks concurrency, parallelism and pipelining for bulk transfers by fitting
//! throughput models to similar historical transfers, correcting them with a
//! short probe, and scheduling chunks of files concurrently. A deterministic
//! simulator stands in for the network.

pub mod error;
pub mod executor;
pub mod experiment;
pub mod history;
pub mod modeling;
pub mod online;
pub mod optimizer;
pub mod scheduler;
pub mod similarity;
pub mod simnet;
pub mod types;

pub use error::{Error, Result};
