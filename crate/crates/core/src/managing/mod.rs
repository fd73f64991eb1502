//! The managing system: a MAPE-K loop over a knowledge base.
//!
//! Monitoring ([`monitor`]) and planning ([`planner`]) are pure state
//! machines; execution lives in [`crate::world`] because it edits the
//! managed system.

pub mod knowledge;
pub mod model;
pub mod monitor;
pub mod planner;

pub use knowledge::KnowledgeBase;
pub use monitor::{detect, Monitor, ObservationRecord, PlatformView};
pub use planner::Planner;
