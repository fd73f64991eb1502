//! Abnormal states reached by services other than the injected ones.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::eval::index::TraceIndex;
use crate::system::catalog::OBSERVED_SERVICES;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceState {
    /// No healthy replica.
    Unavailable,
    /// Healthy but not answering probes promptly.
    LessResponsive,
    /// Received a message late, or first after a staleness gap.
    Delayed,
    /// Accepted a false reading or emitted a command inconsistent with the
    /// true inputs.
    Faulty,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdleInterval {
    pub start: Millis,
    /// First non-idle sample; `None` if still idle when the trace ends.
    pub end: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceStateEffects {
    pub service: String,
    pub states: BTreeSet<ServiceState>,
    pub idle_intervals: Vec<IdleInterval>,
}

impl ServiceStateEffects {
    pub fn idle_bounded(&self) -> bool {
        self.idle_intervals.iter().all(|i| i.end.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossServiceReport {
    pub targets: Vec<String>,
    pub from: Millis,
    pub to: Millis,
    pub services: Vec<ServiceStateEffects>,
}

impl CrossServiceReport {
    /// Services that reached `state`.
    pub fn reached(&self, state: ServiceState) -> BTreeSet<String> {
        self.services
            .iter()
            .filter(|s| s.states.contains(&state))
            .map(|s| s.service.clone())
            .collect()
    }

    pub fn all_idle_bounded(&self) -> bool {
        self.services.iter().all(ServiceStateEffects::idle_bounded)
    }
}

/// States reached by every observed non-target service in `(from, to]`.
pub fn cross_service_state_effects(index: &TraceIndex, targets: &[String], from: Millis, to: Millis) -> CrossServiceReport {
    let mut services = Vec::new();
    for name in OBSERVED_SERVICES {
        if targets.iter().any(|t| t == name) || !index.services.iter().any(|s| s == name) {
            continue;
        }
        let mut states = BTreeSet::new();
        let samples = index.samples_in(name, from, to);
        let mut idle_intervals = Vec::new();
        let mut open: Option<Millis> = None;
        for (i, s) in samples.iter().enumerate() {
            let t = index.sample_time(from, i);
            if s.healthy == 0 {
                states.insert(ServiceState::Unavailable);
            } else if !s.responsive {
                states.insert(ServiceState::LessResponsive);
            }
            match (s.idle(), open) {
                (true, None) => open = Some(t),
                (false, Some(start)) => {
                    idle_intervals.push(IdleInterval { start, end: Some(t) });
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open {
            idle_intervals.push(IdleInterval { start, end: None });
        }
        if !idle_intervals.is_empty() {
            states.insert(ServiceState::Idle);
        }
        let in_window = |at: Millis| at > from && at <= to;
        if index
            .deliveries
            .iter()
            .any(|d| d.service == name && d.delayed && in_window(d.at))
        {
            states.insert(ServiceState::Delayed);
        }
        let false_accept = index
            .validations
            .iter()
            .any(|v| v.service == name && v.accepted && v.is_false && in_window(v.at));
        let bad_command = index
            .decisions
            .iter()
            .any(|d| d.service == name && !d.consistent && in_window(d.at));
        if false_accept || bad_command {
            states.insert(ServiceState::Faulty);
        }
        services.push(ServiceStateEffects {
            service: name.to_string(),
            states,
            idle_intervals,
        });
    }
    CrossServiceReport {
        targets: targets.to_vec(),
        from,
        to,
        services,
    }
}
