//! The managed smart-office system.

pub mod autoscale;
pub mod catalog;
pub mod control;
pub mod model;
pub mod sensor;
