//! Steady-state hypotheses: predicates over a state snapshot.

use serde::{Deserialize, Serialize};

use crate::eval::snapshot::StateSnapshot;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparator {
    Eq,
    Le,
    Lt,
    Ge,
    Gt,
}

impl Comparator {
    pub fn holds(self, observed: f64, bound: f64, tolerance: f64) -> bool {
        match self {
            Comparator::Eq => (observed - bound).abs() <= tolerance,
            Comparator::Le => observed <= bound + tolerance,
            Comparator::Lt => observed < bound + tolerance,
            Comparator::Ge => observed >= bound - tolerance,
            Comparator::Gt => observed > bound - tolerance,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

/// `service` is a service name, or `*` for every service in the snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSelector {
    pub service: String,
    pub metric: String,
}

impl MetricSelector {
    pub fn new(service: &str, metric: &str) -> Self {
        Self {
            service: service.to_string(),
            metric: metric.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub selector: MetricSelector,
    pub comparator: Comparator,
    pub bound: f64,
    #[serde(default)]
    pub tolerance: f64,
}

impl Predicate {
    pub fn new(service: &str, metric: &str, comparator: Comparator, bound: f64) -> Self {
        Self {
            selector: MetricSelector::new(service, metric),
            comparator,
            bound,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateHypothesis {
    pub title: String,
    pub predicates: Vec<Predicate>,
    pub window_ms: crate::Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub service: String,
    pub metric: String,
    pub observed: f64,
    pub comparator: Comparator,
    pub bound: f64,
}

impl std::fmt::Display for Deviation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}.{} = {} (expected {} {})",
            self.service,
            self.metric,
            self.observed,
            self.comparator.symbol(),
            self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub at: crate::Millis,
    pub pass: bool,
    pub deviations: Vec<Deviation>,
}

/// Checks every predicate against the snapshot. A metric name the snapshot
/// does not define is a configuration error.
pub fn verify_hypothesis(h: &SteadyStateHypothesis, snap: &StateSnapshot) -> Result<Verdict> {
    let mut deviations = Vec::new();
    for p in &h.predicates {
        let services: Vec<String> = if p.selector.service == "*" {
            snap.services.keys().cloned().collect()
        } else {
            vec![p.selector.service.clone()]
        };
        for s in services {
            let observed = snap.metric(&s, &p.selector.metric)?;
            if !p.comparator.holds(observed, p.bound, p.tolerance) {
                deviations.push(Deviation {
                    service: s,
                    metric: p.selector.metric.clone(),
                    observed,
                    comparator: p.comparator,
                    bound: p.bound,
                });
            }
        }
    }
    Ok(Verdict {
        at: snap.at,
        pass: deviations.is_empty(),
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparators_respect_tolerance() {
        assert!(Comparator::Le.holds(5.0, 5.0, 0.0));
        assert!(!Comparator::Lt.holds(5.0, 5.0, 0.0));
        assert!(Comparator::Eq.holds(0.995, 1.0, 0.01));
        assert!(!Comparator::Ge.holds(0.98, 1.0, 0.01));
        assert!(Comparator::Gt.holds(1.0, 0.5, 0.0));
    }
}
