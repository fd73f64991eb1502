//! Chaos engine: failure model, experiment pool, injection plans and
//! steady-state hypotheses.

pub mod experiment;
pub mod hypothesis;
pub mod model;
pub mod pool;

pub use experiment::{ChaosExperiment, DrainMode, ExperimentParams, Schedule};
pub use hypothesis::{verify_hypothesis, Comparator, Predicate, SteadyStateHypothesis, Verdict};
pub use pool::{apply_feedback, build_pool, canonical_suite, select_next, FailureModelParams, Pool};
