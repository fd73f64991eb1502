//! Deterministic chaos-engineering harness for a self-healing smart-office
//! microservice system.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernel`]: virtual clock, event queue, seeded RNG streams and the
//!   pub/sub broker model.
//! - [`system`]: the managed smart-office services (sensors, weather,
//!   controls, actuators, UI, broker) and their autoscaler.
//! - [`managing`]: the MAPE-K loop (observe, detect, diagnose, execute).
//! - [`chaos`]: experiment pool, selection, injection and steady-state
//!   hypotheses.
//! - [`eval`]: post-hoc trace analysis (snapshots, quality metrics, impact
//!   classification, blast radius, cycle comparison).
//! - [`workload`]: the user-ramp load generator and latency summaries.
//! - [`harness`]: run orchestration, reports and file exports.
//!
//! [`world::World`] composes the first four into one runnable simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod config;
pub mod error;
pub mod eval;
pub mod harness;
pub mod kernel;
pub mod managing;
pub mod system;
pub mod trace;
pub mod workload;
pub mod world;

pub use error::{Error, Result};

/// Virtual time in milliseconds since simulation start.
pub type Millis = u64;

pub const SECOND: Millis = 1_000;
pub const MINUTE: Millis = 60 * SECOND;
