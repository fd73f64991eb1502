//! Time to recovery: from the last perturbation of an experiment to the
//! restoration of the target's steady state, as seen in the trace.

use serde::{Deserialize, Serialize};

use crate::chaos::experiment::{ChaosExperiment, ExperimentParams};
use crate::chaos::model::Scenario;
use crate::config::Config;
use crate::eval::index::TraceIndex;
use crate::managing::model::FaultKind;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MttrRecord {
    pub experiment: String,
    pub scenario: Scenario,
    pub perturbed_at: Millis,
    pub restored_at: Option<Millis>,
    pub mttr_ms: Option<Millis>,
    /// Longest recovery the detection and repair timings allow.
    pub bound_ms: Millis,
    pub within_bound: bool,
}

/// Detection-to-repair timing of one detected fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecovery {
    pub fault_id: u64,
    pub kind: FaultKind,
    pub service: String,
    pub detected_at: Millis,
    /// First executed recovery action of the fault.
    pub repaired_at: Option<Millis>,
}

fn target_period(cfg: &Config, exp: &ChaosExperiment) -> Millis {
    exp.targets
        .iter()
        .filter_map(|t| cfg.service(t).and_then(|s| s.period_ms))
        .max()
        .unwrap_or(cfg.sim.monitor_tick_ms)
}

/// Detection window plus startup latency plus one period, per scenario.
pub fn mttr_bound(cfg: &Config, exp: &ChaosExperiment) -> Millis {
    let tick = cfg.sim.monitor_tick_ms;
    let startup = cfg.sim.startup_latency_ms;
    let k = &cfg.knowledge;
    let period = target_period(cfg, exp);
    match exp.parameters {
        ExperimentParams::ServiceDown { .. } => (k.crash_probe_threshold as Millis + 1) * tick + startup + tick,
        ExperimentParams::SensorFault { .. } => k.rejection_window_ms + tick + startup + period,
        ExperimentParams::SensorDown { .. } => cfg.sim.staleness_factor * period + tick + startup + period,
        ExperimentParams::ServiceDelayed { delay_ms, .. } => {
            let d = delay_ms.max(1);
            let slow_needed = (k.delay_threshold_ms * k.delay_window_ms).div_ceil(d * tick);
            d + slow_needed * tick + tick + startup + tick
        }
    }
}

fn restoration(index: &TraceIndex, cfg: &Config, exp: &ChaosExperiment, first: Millis, last: Millis) -> Option<Millis> {
    let period = target_period(cfg, exp);
    let mut restored = last;
    for target in &exp.targets {
        let t = match exp.parameters {
            ExperimentParams::ServiceDown { .. } => index
                .requests
                .iter()
                .filter(|r| r.probe && r.ok && &r.service == target && r.sent_at > last)
                .map(|r| r.done_at)
                .min()?,
            ExperimentParams::SensorFault { .. } => {
                let pubs: Vec<_> = index
                    .publishes
                    .iter()
                    .filter(|p| &p.service == target && p.at >= first)
                    .collect();
                let last_false = pubs.iter().filter(|p| !p.clean).map(|p| p.at).max();
                pubs.iter()
                    .filter(|p| p.clean && last_false.is_none_or(|f| p.at > f))
                    .map(|p| p.at)
                    .min()?
            }
            ExperimentParams::SensorDown { .. } => {
                let gap = period * 3 / 2;
                let mut prev = index
                    .publishes
                    .iter()
                    .filter(|p| &p.service == target && p.at <= last)
                    .map(|p| p.at)
                    .max()
                    .unwrap_or(0);
                let mut resumed = None;
                for p in index.publishes.iter().filter(|p| &p.service == target && p.at > last) {
                    if p.at - prev > gap {
                        resumed = Some(p.at);
                        break;
                    }
                    prev = p.at;
                }
                match resumed {
                    Some(t) => t,
                    None if index.end_ms - prev > gap => return None,
                    None => last,
                }
            }
            ExperimentParams::ServiceDelayed { .. } => index
                .requests
                .iter()
                .filter(|r| {
                    r.probe
                        && r.ok
                        && &r.service == target
                        && r.sent_at > last
                        && r.latency_ms <= cfg.knowledge.delay_threshold_ms
                })
                .map(|r| r.done_at)
                .min()?,
        };
        restored = restored.max(t);
    }
    Some(restored)
}

/// Recovery time of `exp`, or `None` when no perturbation of it was logged.
pub fn mttr(index: &TraceIndex, cfg: &Config, exp: &ChaosExperiment) -> Option<MttrRecord> {
    let perturbations: Vec<Millis> = index
        .chaos
        .iter()
        .filter(|e| e.experiment == exp.id && e.action.is_perturbation())
        .map(|e| e.at)
        .collect();
    let first = *perturbations.first()?;
    let last = *perturbations.last()?;
    let restored_at = restoration(index, cfg, exp, first, last);
    let mttr_ms = restored_at.map(|r| r - last);
    let bound_ms = mttr_bound(cfg, exp);
    Some(MttrRecord {
        experiment: exp.id.clone(),
        scenario: exp.scenario,
        perturbed_at: last,
        restored_at,
        mttr_ms,
        bound_ms,
        within_bound: mttr_ms.is_some_and(|m| m <= bound_ms),
    })
}

pub fn fault_recoveries(index: &TraceIndex) -> Vec<FaultRecovery> {
    index
        .faults
        .iter()
        .map(|f| FaultRecovery {
            fault_id: f.id,
            kind: f.kind,
            service: f.service.clone(),
            detected_at: f.detected_at,
            repaired_at: index
                .recoveries
                .iter()
                .filter(|(_, a, executed)| a.fault_id == f.id && *executed)
                .map(|(at, _, _)| *at)
                .min(),
        })
        .collect()
}
