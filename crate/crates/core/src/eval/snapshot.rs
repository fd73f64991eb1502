//! Phase-tagged state snapshots derived from the trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::eval::impact::ImpactLevel;
use crate::eval::index::TraceIndex;
use crate::trace::Trace;
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Before,
    During,
    After,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Before, Phase::During, Phase::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Before => "before",
            Phase::During => "during",
            Phase::After => "after",
        }
    }
}

/// Per-service state over one snapshot window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSnapshot {
    /// Fewest healthy replicas seen in the window.
    pub healthy_replicas: u32,
    /// Most replicas starting at once.
    pub starting_replicas: u32,
    /// Fraction of samples with a promptly answering healthy replica.
    pub responsive: f64,
    /// Fraction of samples the service was idle.
    pub idle: f64,
    /// Fraction of samples with impact at most low.
    pub functional: f64,
    /// Most non-display inputs stale at once.
    pub stale_inputs: u32,
    pub impact: ImpactLevel,
    /// Fraction of decisions taken in degraded mode.
    pub degraded: f64,
    /// Slowest successful response, or age of the oldest outstanding request.
    pub max_latency_ms: Option<f64>,
    pub mean_latency_ms: Option<f64>,
    pub accepted: u32,
    pub rejected: u32,
    pub accepted_false: u32,
    pub accepted_out_of_range: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub at: Millis,
    pub phase: Phase,
    pub window_ms: Millis,
    pub services: BTreeMap<String, ServiceSnapshot>,
}

impl StateSnapshot {
    pub const METRICS: [&'static str; 14] = [
        "healthy_replicas",
        "starting_replicas",
        "responsive",
        "idle",
        "functional",
        "stale_inputs",
        "impact",
        "degraded",
        "max_latency_ms",
        "mean_latency_ms",
        "accepted",
        "rejected",
        "accepted_false",
        "accepted_out_of_range",
    ];

    /// Named metric of one service; absent latency statistics read as NaN,
    /// which fails every comparison.
    pub fn metric(&self, service: &str, name: &str) -> Result<f64> {
        let s = self
            .services
            .get(service)
            .ok_or_else(|| Error::UnknownService(service.to_string()))?;
        let v = match name {
            "healthy_replicas" => s.healthy_replicas as f64,
            "starting_replicas" => s.starting_replicas as f64,
            "responsive" => s.responsive,
            "idle" => s.idle,
            "functional" => s.functional,
            "stale_inputs" => s.stale_inputs as f64,
            "impact" => s.impact as u8 as f64,
            "degraded" => s.degraded,
            "max_latency_ms" => s.max_latency_ms.unwrap_or(f64::NAN),
            "mean_latency_ms" => s.mean_latency_ms.unwrap_or(f64::NAN),
            "accepted" => s.accepted as f64,
            "rejected" => s.rejected as f64,
            "accepted_false" => s.accepted_false as f64,
            "accepted_out_of_range" => s.accepted_out_of_range as f64,
            other => return Err(Error::UnknownMetric(other.to_string())),
        };
        Ok(v)
    }
}

fn fraction(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Snapshot of every service over `(at - window_ms, at]`.
pub fn capture_indexed(index: &TraceIndex, at: Millis, phase: Phase, window_ms: Millis) -> Result<StateSnapshot> {
    if at < window_ms {
        return Err(Error::WindowBeforeTrace {
            start: at as i64 - window_ms as i64,
        });
    }
    if at > index.end_ms {
        return Err(Error::WindowAfterTrace { at, end: index.end_ms });
    }
    let from = at - window_ms;
    let mut services = BTreeMap::new();
    for name in &index.services {
        let samples = index.samples_in(name, from, at);
        let n = samples.len();
        let latencies: Vec<f64> = index
            .completed(from, at)
            .filter(|r| &r.service == name)
            .map(|r| r.latency_ms as f64)
            .collect();
        let oldest = index
            .outstanding_at(at)
            .filter(|r| &r.service == name)
            .map(|r| (at - r.sent_at) as f64)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        let max_done = latencies.iter().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        let max_latency_ms = match (max_done, oldest) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        let mean_latency_ms = (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64);
        let vals: Vec<_> = index
            .validations
            .iter()
            .filter(|v| &v.service == name && v.at > from && v.at <= at)
            .collect();
        let decisions: Vec<_> = index
            .decisions
            .iter()
            .filter(|d| &d.service == name && d.at > from && d.at <= at)
            .collect();
        services.insert(
            name.clone(),
            ServiceSnapshot {
                healthy_replicas: samples.iter().map(|s| s.healthy).min().unwrap_or(0),
                starting_replicas: samples.iter().map(|s| s.starting).max().unwrap_or(0),
                responsive: fraction(samples.iter().filter(|s| s.responsive).count(), n),
                idle: fraction(samples.iter().filter(|s| s.idle()).count(), n),
                functional: fraction(samples.iter().filter(|s| s.impact <= ImpactLevel::Low).count(), n),
                stale_inputs: samples.iter().map(|s| s.stale_inputs).max().unwrap_or(0),
                impact: samples.iter().map(|s| s.impact).max().unwrap_or_default(),
                degraded: fraction(decisions.iter().filter(|d| d.degraded).count(), decisions.len()),
                max_latency_ms,
                mean_latency_ms,
                accepted: vals.iter().filter(|v| v.accepted).count() as u32,
                rejected: vals.iter().filter(|v| !v.accepted).count() as u32,
                accepted_false: vals.iter().filter(|v| v.accepted && v.is_false).count() as u32,
                accepted_out_of_range: vals.iter().filter(|v| v.accepted && v.out_of_range).count() as u32,
            },
        );
    }
    Ok(StateSnapshot {
        at,
        phase,
        window_ms,
        services,
    })
}

/// Snapshot over the configured window ending at `at`, computed from the
/// trace alone.
pub fn capture(trace: &Trace, cfg: &Config, at: Millis, phase: Phase) -> Result<StateSnapshot> {
    let window = cfg.evaluation.snapshot_window_ms;
    if at < window {
        return Err(Error::WindowBeforeTrace {
            start: at as i64 - window as i64,
        });
    }
    let index = TraceIndex::build(trace, cfg, at);
    capture_indexed(&index, at, phase, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::catalog::{HEATING_CONTROL, MQTT_BROKER};
    use crate::world::World;

    fn clean_trace(until: Millis) -> (Config, Trace) {
        let cfg = Config::default();
        let mut w = World::new(cfg.clone(), true).unwrap();
        w.run_until(until).unwrap();
        (cfg, w.into_trace())
    }

    #[test]
    fn clean_run_is_healthy_responsive_and_unaffected() {
        let (cfg, trace) = clean_trace(60_000);
        let snap = capture(&trace, &cfg, 60_000, Phase::Before).unwrap();
        for (name, s) in &snap.services {
            assert!(s.healthy_replicas >= 1, "{name}");
            assert_eq!(s.responsive, 1.0, "{name}");
            assert_eq!(s.impact, ImpactLevel::None, "{name}");
            assert_eq!(s.accepted_false, 0, "{name}");
        }
        assert!(snap.metric(HEATING_CONTROL, "accepted").unwrap() > 0.0);
    }

    #[test]
    fn every_listed_metric_resolves() {
        let (cfg, trace) = clean_trace(30_000);
        let snap = capture(&trace, &cfg, 30_000, Phase::Before).unwrap();
        for m in StateSnapshot::METRICS {
            snap.metric(MQTT_BROKER, m).unwrap();
        }
        assert!(matches!(snap.metric(MQTT_BROKER, "bogus"), Err(Error::UnknownMetric(_))));
        assert!(matches!(snap.metric("nope", "idle"), Err(Error::UnknownService(_))));
    }

    #[test]
    fn windows_outside_the_trace_are_rejected() {
        let (cfg, trace) = clean_trace(30_000);
        let w = cfg.evaluation.snapshot_window_ms;
        assert!(matches!(
            capture(&trace, &cfg, w - 1, Phase::Before),
            Err(Error::WindowBeforeTrace { .. })
        ));
        let index = TraceIndex::build(&trace, &cfg, 30_000);
        assert!(matches!(
            capture_indexed(&index, 40_000, Phase::After, w),
            Err(Error::WindowAfterTrace { .. })
        ));
    }
}
