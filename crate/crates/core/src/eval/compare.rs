//! Comparison of the before, during and after phases of one chaos cycle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chaos::hypothesis::{verify_hypothesis, SteadyStateHypothesis, Verdict};
use crate::chaos::model::Scenario;
use crate::config::Config;
use crate::eval::index::TraceIndex;
use crate::eval::metrics::{compute_metrics_indexed, deviations, QualityAttribute, QualityMetrics};
use crate::eval::snapshot::{Phase, StateSnapshot};
use crate::system::model::ServiceKind;
use crate::{Millis, Result};

/// Half-open `(from, to]` windows of the three phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseWindows {
    pub before: (Millis, Millis),
    pub during: (Millis, Millis),
    pub after: (Millis, Millis),
}

impl PhaseWindows {
    pub fn get(&self, phase: Phase) -> (Millis, Millis) {
        match phase {
            Phase::Before => self.before,
            Phase::During => self.during,
            Phase::After => self.after,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementVerdict {
    pub requirement: String,
    pub phase: Phase,
    pub compliant: bool,
    pub violations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub availability: f64,
    pub reliability: f64,
    pub integrity: f64,
    pub mean_latency_ms: Option<f64>,
}

impl MetricDelta {
    fn between(base: &QualityMetrics, other: &QualityMetrics) -> Self {
        Self {
            availability: other.availability - base.availability,
            reliability: other.reliability - base.reliability,
            integrity: other.integrity - base.integrity,
            mean_latency_ms: match (&base.performance, &other.performance) {
                (Some(b), Some(o)) => Some(o.mean_ms - b.mean_ms),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleComparison {
    pub scenario: Option<Scenario>,
    pub metrics: BTreeMap<Phase, QualityMetrics>,
    /// Change of the during and after phases relative to before.
    pub deltas: BTreeMap<Phase, MetricDelta>,
    pub verdicts: BTreeMap<Phase, Vec<Verdict>>,
    /// A phase passes when every one of its verdicts passes.
    pub phase_pass: BTreeMap<Phase, bool>,
    pub requirements: Vec<RequirementVerdict>,
    /// Attributes deviating beyond tolerance in the during or after phase.
    pub deviations: BTreeSet<QualityAttribute>,
    /// Attributes the scenario is checked against.
    pub expected: BTreeSet<QualityAttribute>,
    pub unexpected: BTreeSet<QualityAttribute>,
    pub conforms: bool,
}

fn requirements(index: &TraceIndex, cfg: &Config, windows: &PhaseWindows) -> Vec<RequirementVerdict> {
    let mut out = Vec::new();
    let controls: Vec<&str> = cfg
        .services
        .iter()
        .filter(|s| s.kind == ServiceKind::Control)
        .map(|s| s.name.as_str())
        .collect();
    for phase in Phase::ALL {
        let (from, to) = windows.get(phase);
        let inside = |at: Millis| at > from && at <= to;
        for c in &controls {
            let violations = index
                .decisions
                .iter()
                .filter(|d| d.service == *c && inside(d.at) && !d.consistent)
                .count() as u32;
            out.push(RequirementVerdict {
                requirement: format!("{c} commands follow the user rules"),
                phase,
                compliant: violations == 0,
                violations,
            });
        }
        let violations = index
            .validations
            .iter()
            .filter(|v| inside(v.at) && v.accepted && v.out_of_range)
            .count() as u32;
        out.push(RequirementVerdict {
            requirement: "controls act only on plausible readings".to_string(),
            phase,
            compliant: violations == 0,
            violations,
        });
    }
    out
}

/// Compares the phases of one cycle. `snapshots` carry their own phase tag.
pub fn compare(
    index: &TraceIndex,
    cfg: &Config,
    scenario: Option<Scenario>,
    windows: &PhaseWindows,
    snapshots: &[StateSnapshot],
    hypothesis: &SteadyStateHypothesis,
) -> Result<CycleComparison> {
    let mut metrics = BTreeMap::new();
    for phase in Phase::ALL {
        let (from, to) = windows.get(phase);
        metrics.insert(phase, compute_metrics_indexed(index, cfg, from, to)?);
    }
    let before = &metrics[&Phase::Before];
    let mut deltas = BTreeMap::new();
    let mut deviating = BTreeSet::new();
    for phase in [Phase::During, Phase::After] {
        deltas.insert(phase, MetricDelta::between(before, &metrics[&phase]));
        deviating.extend(deviations(before, &metrics[&phase], cfg));
    }
    let mut verdicts: BTreeMap<Phase, Vec<Verdict>> = Phase::ALL.iter().map(|p| (*p, Vec::new())).collect();
    for snap in snapshots {
        let v = verify_hypothesis(hypothesis, snap)?;
        verdicts.entry(snap.phase).or_default().push(v);
    }
    let phase_pass = verdicts
        .iter()
        .map(|(p, vs)| (*p, vs.iter().all(|v| v.pass)))
        .collect();
    let expected = scenario.map(QualityAttribute::checked_for).unwrap_or_default();
    let unexpected: BTreeSet<_> = deviating.difference(&expected).copied().collect();
    Ok(CycleComparison {
        scenario,
        deltas,
        verdicts,
        phase_pass,
        requirements: requirements(index, cfg, windows),
        conforms: unexpected.is_empty(),
        deviations: deviating,
        expected,
        unexpected,
        metrics,
    })
}
