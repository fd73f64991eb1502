//! Quality-attribute metrics over a trace window.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chaos::model::Scenario;
use crate::config::{Aggregate, Config};
use crate::eval::index::TraceIndex;
use crate::system::catalog::OBSERVED_SERVICES;
use crate::trace::Trace;
use crate::workload::{latency_stats, LatencyStats};
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityAttribute {
    Availability,
    Reliability,
    Integrity,
    Performance,
}

impl QualityAttribute {
    pub const ALL: [QualityAttribute; 4] = [
        QualityAttribute::Availability,
        QualityAttribute::Reliability,
        QualityAttribute::Integrity,
        QualityAttribute::Performance,
    ];

    /// Attributes each failure scenario is checked against.
    pub fn checked_for(scenario: Scenario) -> BTreeSet<QualityAttribute> {
        use QualityAttribute::*;
        let list: &[QualityAttribute] = match scenario {
            Scenario::ServiceDown => &[Availability, Reliability, Performance],
            Scenario::SensorFault => &[Reliability, Integrity],
            Scenario::SensorDown => &[Availability, Reliability, Integrity],
            Scenario::ServiceDelayed => &[Availability, Performance],
        };
        list.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub from: Millis,
    pub to: Millis,
    /// Aggregate over the observed services (minimum unless configured mean).
    pub availability: f64,
    pub availability_by_service: BTreeMap<String, f64>,
    /// Fraction of control outputs matching the rules on true inputs.
    pub reliability: f64,
    pub decisions: u32,
    /// One minus the share of accepted readings that were false.
    pub integrity: f64,
    pub accepted: u32,
    pub accepted_false: u32,
    /// Successful responses completing in the window; absent without any.
    pub performance: Option<LatencyStats>,
}

fn observed(index: &TraceIndex) -> Vec<&str> {
    let present: Vec<&str> = OBSERVED_SERVICES
        .iter()
        .copied()
        .filter(|s| index.services.iter().any(|n| n == s))
        .collect();
    if present.is_empty() {
        index.services.iter().map(String::as_str).collect()
    } else {
        present
    }
}

/// Metrics over `(from, to]`.
pub fn compute_metrics_indexed(index: &TraceIndex, cfg: &Config, from: Millis, to: Millis) -> Result<QualityMetrics> {
    if to <= from {
        return Err(Error::EmptyWindow { from, to });
    }
    let mut availability_by_service = BTreeMap::new();
    for s in observed(index) {
        let samples = index.samples_in(s, from, to);
        let a = if samples.is_empty() {
            1.0
        } else {
            samples.iter().filter(|x| x.available()).count() as f64 / samples.len() as f64
        };
        availability_by_service.insert(s.to_string(), a);
    }
    let values = availability_by_service.values().copied();
    let availability = match cfg.evaluation.availability_aggregate {
        Aggregate::Min => values.fold(1.0, f64::min),
        Aggregate::Mean => {
            let n = availability_by_service.len().max(1) as f64;
            values.sum::<f64>() / n
        }
    };

    let decisions: Vec<_> = index.decisions.iter().filter(|d| d.at > from && d.at <= to).collect();
    let consistent = decisions.iter().filter(|d| d.consistent).count();
    let reliability = if decisions.is_empty() {
        1.0
    } else {
        consistent as f64 / decisions.len() as f64
    };

    let accepted: Vec<_> = index
        .validations
        .iter()
        .filter(|v| v.accepted && v.at > from && v.at <= to)
        .collect();
    let accepted_false = accepted.iter().filter(|v| v.is_false).count();
    let integrity = if accepted.is_empty() {
        1.0
    } else {
        1.0 - accepted_false as f64 / accepted.len() as f64
    };

    let latencies: Vec<Millis> = index.completed(from, to).map(|r| r.latency_ms).collect();
    Ok(QualityMetrics {
        from,
        to,
        availability,
        availability_by_service,
        reliability,
        decisions: decisions.len() as u32,
        integrity,
        accepted: accepted.len() as u32,
        accepted_false: accepted_false as u32,
        performance: latency_stats(&latencies),
    })
}

pub fn compute_metrics(trace: &Trace, cfg: &Config, from: Millis, to: Millis) -> Result<QualityMetrics> {
    let index = TraceIndex::build(trace, cfg, to);
    compute_metrics_indexed(&index, cfg, from, to)
}

fn latency_deviates(base: f64, other: f64, tolerance: f64) -> bool {
    if base == 0.0 {
        other != 0.0
    } else {
        ((other - base) / base).abs() > tolerance + EPS
    }
}

/// Absorbs rounding so a difference of exactly the tolerance stays inside it.
const EPS: f64 = 1e-9;

/// Attributes of `other` that leave the tolerance band around `base`.
pub fn deviations(base: &QualityMetrics, other: &QualityMetrics, cfg: &Config) -> BTreeSet<QualityAttribute> {
    let ft = cfg.evaluation.fraction_tolerance + EPS;
    let lt = cfg.evaluation.latency_tolerance;
    let mut out = BTreeSet::new();
    if (other.availability - base.availability).abs() > ft {
        out.insert(QualityAttribute::Availability);
    }
    if (other.reliability - base.reliability).abs() > ft {
        out.insert(QualityAttribute::Reliability);
    }
    if (other.integrity - base.integrity).abs() > ft {
        out.insert(QualityAttribute::Integrity);
    }
    let perf = match (&base.performance, &other.performance) {
        (Some(b), Some(o)) => {
            latency_deviates(b.mean_ms, o.mean_ms, lt)
                || latency_deviates(b.slowest10_mean_ms, o.slowest10_mean_ms, lt)
                || latency_deviates(b.slowest1_mean_ms, o.slowest1_mean_ms, lt)
        }
        (None, None) => false,
        _ => true,
    };
    if perf {
        out.insert(QualityAttribute::Performance);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(availability: f64, integrity: f64, latencies: &[Millis]) -> QualityMetrics {
        QualityMetrics {
            from: 0,
            to: 60_000,
            availability,
            availability_by_service: BTreeMap::new(),
            reliability: 1.0,
            decisions: 2,
            integrity,
            accepted: 10,
            accepted_false: 0,
            performance: latency_stats(latencies),
        }
    }

    #[test]
    fn differences_within_tolerance_are_not_deviations() {
        let cfg = Config::default();
        let base = metrics(1.0, 1.0, &[100; 10]);
        let near = metrics(0.995, 0.99, &[109; 10]);
        assert!(deviations(&base, &near, &cfg).is_empty());
    }

    #[test]
    fn each_attribute_deviates_independently() {
        let cfg = Config::default();
        let base = metrics(1.0, 1.0, &[100; 10]);
        let got = deviations(&base, &metrics(0.9, 1.0, &[100; 10]), &cfg);
        assert_eq!(got, BTreeSet::from([QualityAttribute::Availability]));
        let got = deviations(&base, &metrics(1.0, 0.5, &[120; 10]), &cfg);
        assert_eq!(got, BTreeSet::from([QualityAttribute::Integrity, QualityAttribute::Performance]));
    }

    #[test]
    fn latency_present_in_only_one_phase_deviates() {
        let cfg = Config::default();
        let base = metrics(1.0, 1.0, &[100; 10]);
        let got = deviations(&base, &metrics(1.0, 1.0, &[]), &cfg);
        assert_eq!(got, BTreeSet::from([QualityAttribute::Performance]));
    }

    #[test]
    fn checked_attributes_per_scenario() {
        use QualityAttribute::*;
        assert_eq!(
            QualityAttribute::checked_for(Scenario::ServiceDown),
            BTreeSet::from([Availability, Reliability, Performance])
        );
        assert_eq!(
            QualityAttribute::checked_for(Scenario::SensorFault),
            BTreeSet::from([Reliability, Integrity])
        );
        assert_eq!(
            QualityAttribute::checked_for(Scenario::SensorDown),
            BTreeSet::from([Availability, Reliability, Integrity])
        );
        assert_eq!(
            QualityAttribute::checked_for(Scenario::ServiceDelayed),
            BTreeSet::from([Availability, Performance])
        );
    }

    #[test]
    fn empty_window_is_an_error() {
        let cfg = Config::default();
        let index = TraceIndex::build(&crate::trace::Trace::new(), &cfg, 10_000);
        assert!(matches!(
            compute_metrics_indexed(&index, &cfg, 5_000, 5_000),
            Err(crate::Error::EmptyWindow { .. })
        ));
    }
}
