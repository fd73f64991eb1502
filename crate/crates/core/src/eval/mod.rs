//! Post-hoc trace analysis: snapshots, quality metrics, impact
//! classification, blast radius, cross-service states, recovery times and
//! cycle comparison. Everything here is a pure function of a trace and the
//! configuration it was produced with.

pub mod compare;
pub mod cross;
pub mod impact;
pub mod index;
pub mod metrics;
pub mod mttr;
pub mod snapshot;

pub use compare::{compare, CycleComparison, PhaseWindows};
pub use cross::{cross_service_state_effects, CrossServiceReport, ServiceState};
pub use impact::{blast_row, classify_impact, BlastRadiusMatrix, Cell, ImpactLevel};
pub use index::TraceIndex;
pub use metrics::{compute_metrics, QualityAttribute, QualityMetrics};
pub use mttr::{mttr, mttr_bound, MttrRecord};
pub use snapshot::{capture, Phase, StateSnapshot};
