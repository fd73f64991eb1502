//! Observe and analyze stages: per-service tracking from delivered messages
//! and platform probes, and rule-based fault detection.
//!
//! Nothing here reads injected fault flags. Inputs are message deliveries to
//! the monitoring service, probe outcomes and replica counts reported by the
//! platform.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::managing::knowledge::KnowledgeBase;
use crate::managing::model::{Evidence, FaultKind};
use crate::system::model::{ServiceKind, SensorType};
use crate::trace::{MessageBody, ValidationCode};
use crate::Millis;

/// Replica counts and broker health as reported by the platform.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlatformView {
    pub healthy: BTreeMap<String, u32>,
    pub starting: BTreeMap<String, u32>,
    /// Replica ids currently healthy.
    pub healthy_replicas: Vec<String>,
    pub broker_up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub service: String,
    pub at: Millis,
    pub healthy_replicas: u32,
    pub starting_replicas: u32,
    pub last_message_at: Option<Millis>,
    /// A periodic publisher whose messages are older than the staleness window.
    pub message_stale: bool,
    pub consecutive_probe_failures: u32,
    pub first_failure_at: Option<Millis>,
    pub last_probe_ok: Option<bool>,
    pub oldest_inflight_ms: Millis,
    pub avg_response_ms: Option<f64>,
    pub first_slow_at: Option<Millis>,
    pub battery: Option<f64>,
    pub battery_at: Option<Millis>,
    pub last_value: Option<f64>,
    pub rejections_in_window: u32,
    pub first_rejection_at: Option<Millis>,
    /// Staleness-based rules are off while the broker is down or recovering.
    pub staleness_suppressed: bool,
    pub is_sensor: bool,
}

#[derive(Debug, Clone, Default)]
struct Track {
    last_message_at: Option<Millis>,
    battery: Option<(Millis, f64)>,
    last_value: Option<f64>,
    rejections: VecDeque<Millis>,
    consecutive_failures: u32,
    first_failure_at: Option<Millis>,
    last_probe_ok: Option<bool>,
    /// (completed_at, sent_at, replica, latency)
    latencies: VecDeque<(Millis, Millis, String, Millis)>,
    inflight: BTreeMap<u64, Millis>,
    since: BTreeMap<FaultKind, Millis>,
}

impl Track {
    fn since(&self, kind: FaultKind) -> Millis {
        self.since.get(&kind).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct Monitor {
    tracks: BTreeMap<String, Track>,
    broker_up_since: Option<Millis>,
    broker_was_up: bool,
}

impl Monitor {
    pub fn new(kb: &KnowledgeBase) -> Self {
        Self {
            tracks: kb.kinds.keys().map(|s| (s.clone(), Track::default())).collect(),
            broker_up_since: Some(0),
            broker_was_up: true,
        }
    }

    fn track(&mut self, service: &str) -> &mut Track {
        self.tracks.entry(service.to_string()).or_default()
    }

    /// A message from `publisher_service` delivered to the monitor.
    pub fn on_message(&mut self, now: Millis, publisher_service: &str, body: &MessageBody, kb: &KnowledgeBase) {
        let t = self.track(publisher_service);
        t.last_message_at = Some(now);
        if let MessageBody::Reading { sensor, value, battery } = body {
            t.last_value = Some(*value);
            t.battery = Some((now, *battery));
            if kb.validate_reading(Some(*sensor), *value) != ValidationCode::Accepted {
                t.rejections.push_back(now);
            }
        }
    }

    pub fn on_probe_sent(&mut self, service: &str, req: u64, now: Millis) {
        self.track(service).inflight.insert(req, now);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn on_probe_result(
        &mut self,
        service: &str,
        req: u64,
        replica: Option<&str>,
        sent_at: Millis,
        latency: Millis,
        ok: bool,
        now: Millis,
    ) {
        let t = self.track(service);
        t.inflight.remove(&req);
        t.last_probe_ok = Some(ok);
        if ok {
            t.consecutive_failures = 0;
            t.first_failure_at = None;
            if let Some(r) = replica {
                t.latencies.push_back((now, sent_at, r.to_string(), latency));
            }
        } else if sent_at >= t.since(FaultKind::Crash) {
            if t.consecutive_failures == 0 {
                t.first_failure_at = Some(sent_at);
            }
            t.consecutive_failures += 1;
        }
    }

    /// Evidence of `kind` on `service` before `since` is spent.
    pub fn reset_evidence(&mut self, service: &str, kind: FaultKind, since: Millis) {
        let t = self.track(service);
        t.since.insert(kind, since);
        if kind == FaultKind::Crash {
            t.consecutive_failures = 0;
            t.first_failure_at = None;
        }
    }

    pub fn observe(&mut self, now: Millis, view: &PlatformView, kb: &KnowledgeBase) -> Vec<ObservationRecord> {
        if view.broker_up && !self.broker_was_up {
            self.broker_up_since = Some(now);
        }
        if !view.broker_up {
            self.broker_up_since = None;
        }
        self.broker_was_up = view.broker_up;
        let s = &kb.settings;
        let mut out = Vec::new();
        for (service, t) in self.tracks.iter_mut() {
            let kind = kb.kinds.get(service).copied();
            if kind == Some(ServiceKind::Monitoring) {
                continue;
            }
            while t.rejections.front().is_some_and(|&r| r + s.rejection_window_ms <= now) {
                t.rejections.pop_front();
            }
            while t.latencies.front().is_some_and(|l| l.0 + s.delay_window_ms <= now) {
                t.latencies.pop_front();
            }
            let err_since = t.since(FaultKind::ErroneousData);
            let rejections: Vec<Millis> = t.rejections.iter().copied().filter(|&r| r >= err_since).collect();
            let delay_since = t.since(FaultKind::Delay);
            let samples: Vec<&(Millis, Millis, String, Millis)> = t
                .latencies
                .iter()
                .filter(|l| l.1 >= delay_since && view.healthy_replicas.contains(&l.2))
                .collect();
            let avg = (!samples.is_empty())
                .then(|| samples.iter().map(|l| l.3 as f64).sum::<f64>() / samples.len() as f64);
            let first_slow_at = samples
                .iter()
                .filter(|l| l.3 > s.delay_threshold_ms)
                .map(|l| l.1)
                .min();

            let period = kb.periods.get(service).copied();
            let staleness = kb.output_staleness(service);
            let periodic = matches!(
                kind,
                Some(ServiceKind::Sensor | ServiceKind::External | ServiceKind::Actuator)
            );
            let battery_since = t.since(FaultKind::BatteryDrain);
            let message_stale = match (periodic, staleness, period) {
                (true, Some(w), Some(_)) => {
                    let reference = t.last_message_at.unwrap_or(0).max(battery_since);
                    now > reference + w
                }
                _ => false,
            };
            let suppressed = match (self.broker_up_since, staleness) {
                (None, _) => true,
                (Some(up), Some(w)) => now < up + w,
                (Some(_), None) => false,
            };
            let battery = t.battery.filter(|(at, _)| *at >= battery_since);
            out.push(ObservationRecord {
                service: service.clone(),
                at: now,
                healthy_replicas: view.healthy.get(service).copied().unwrap_or(0),
                starting_replicas: view.starting.get(service).copied().unwrap_or(0),
                last_message_at: t.last_message_at,
                message_stale,
                consecutive_probe_failures: t.consecutive_failures,
                first_failure_at: t.first_failure_at,
                last_probe_ok: t.last_probe_ok,
                oldest_inflight_ms: t.inflight.values().map(|&sent| now - sent).max().unwrap_or(0),
                avg_response_ms: avg,
                first_slow_at,
                battery: battery.map(|b| b.1),
                battery_at: battery.map(|b| b.0),
                last_value: t.last_value,
                rejections_in_window: rejections.len() as u32,
                first_rejection_at: rejections.first().copied(),
                staleness_suppressed: suppressed,
                is_sensor: kind == Some(ServiceKind::Sensor),
            });
        }
        out
    }
}

/// A detected fault before it is numbered.
#[derive(Debug, Clone, PartialEq)]
pub struct Detected {
    pub kind: FaultKind,
    pub service: String,
    pub evidence: Evidence,
}

/// Applies the detection rules to one round of observations.
pub fn detect(records: &[ObservationRecord], kb: &KnowledgeBase) -> Vec<Detected> {
    let s = &kb.settings;
    let tick = kb.monitor_tick_ms;
    let mut out = Vec::new();
    for r in records {
        let mut raise = |kind: FaultKind, earliest: Millis, summary: String| {
            out.push(Detected {
                kind,
                service: r.service.clone(),
                evidence: Evidence {
                    earliest_at: earliest.min(r.at),
                    summary,
                },
            });
        };
        if r.consecutive_probe_failures >= s.crash_probe_threshold && r.starting_replicas == 0 {
            raise(
                FaultKind::Crash,
                r.first_failure_at.unwrap_or(r.at),
                format!(
                    "{} consecutive failed probes, {} healthy replicas",
                    r.consecutive_probe_failures, r.healthy_replicas
                ),
            );
        }
        if r.rejections_in_window >= s.rejection_threshold {
            raise(
                FaultKind::ErroneousData,
                r.first_rejection_at.unwrap_or(r.at),
                format!(
                    "{} out-of-range readings within {} ms",
                    r.rejections_in_window, s.rejection_window_ms
                ),
            );
        }
        if r.is_sensor {
            let low = r.battery.is_some_and(|b| b <= s.battery_alarm_pct);
            let probes_healthy = r.healthy_replicas > 0
                && r.consecutive_probe_failures == 0
                && r.last_probe_ok == Some(true)
                && r.oldest_inflight_ms <= 2 * tick;
            let idle = r.message_stale && probes_healthy && !r.staleness_suppressed;
            if low {
                raise(
                    FaultKind::BatteryDrain,
                    r.battery_at.unwrap_or(r.at),
                    format!("battery at {:.1}%", r.battery.unwrap_or(0.0)),
                );
            } else if idle {
                raise(
                    FaultKind::BatteryDrain,
                    r.last_message_at.unwrap_or(r.at),
                    "sensor idle while its replica answers probes".to_string(),
                );
            }
        }
        if let Some(avg) = r.avg_response_ms {
            if avg > s.delay_threshold_ms as f64 {
                raise(
                    FaultKind::Delay,
                    r.first_slow_at.unwrap_or(r.at),
                    format!("average response {avg:.0} ms over {} ms", s.delay_window_ms),
                );
            }
        }
    }
    out
}

/// Sensor type carried by a reading body, for validation.
pub fn sensor_of(body: &MessageBody) -> Option<(SensorType, f64)> {
    match body {
        MessageBody::Reading { sensor, value, .. } => Some((*sensor, *value)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::system::catalog::{HEATING_CONTROL, LIGHT_CONTROL, TEMPERATURE_SENSOR};

    fn kb() -> KnowledgeBase {
        KnowledgeBase::from_config(&Config::default())
    }

    fn view_all_healthy(kb: &KnowledgeBase) -> PlatformView {
        PlatformView {
            healthy: kb.kinds.keys().map(|s| (s.clone(), 1)).collect(),
            starting: BTreeMap::new(),
            healthy_replicas: kb.kinds.keys().map(|s| format!("{s}#0")).collect(),
            broker_up: true,
        }
    }

    fn reading(v: f64, battery: f64) -> MessageBody {
        MessageBody::Reading {
            sensor: SensorType::Temperature,
            value: v,
            battery,
        }
    }

    #[test]
    fn zero_healthy_replicas_is_a_crash_after_threshold() {
        let kb = kb();
        let mut m = Monitor::new(&kb);
        let mut view = view_all_healthy(&kb);
        view.healthy.insert(HEATING_CONTROL.into(), 0);
        for i in 0..3u64 {
            m.on_probe_result(HEATING_CONTROL, i, None, i * 1000, 0, false, i * 1000);
        }
        let faults = detect(&m.observe(3000, &view, &kb), &kb);
        assert!(faults
            .iter()
            .any(|f| f.kind == FaultKind::Crash && f.service == HEATING_CONTROL && f.evidence.earliest_at == 0));
    }

    #[test]
    fn three_rejections_make_erroneous_data() {
        let kb = kb();
        let mut m = Monitor::new(&kb);
        for i in 0..3 {
            m.on_message(i * 2000, TEMPERATURE_SENSOR, &reading(250.0, 80.0), &kb);
        }
        let faults = detect(&m.observe(5000, &view_all_healthy(&kb), &kb), &kb);
        assert!(faults.iter().any(|f| f.kind == FaultKind::ErroneousData));
        m.reset_evidence(TEMPERATURE_SENSOR, FaultKind::ErroneousData, 5001);
        let faults = detect(&m.observe(6000, &view_all_healthy(&kb), &kb), &kb);
        assert!(!faults.iter().any(|f| f.kind == FaultKind::ErroneousData));
    }

    #[test]
    fn slow_average_is_a_delay() {
        let kb = kb();
        let mut m = Monitor::new(&kb);
        let replica = format!("{LIGHT_CONTROL}#0");
        for i in 0..5u64 {
            m.on_probe_result(LIGHT_CONTROL, i, Some(&replica), i * 1000, 25_000, true, i * 1000 + 25_000);
        }
        let faults = detect(&m.observe(30_000, &view_all_healthy(&kb), &kb), &kb);
        assert!(faults.iter().any(|f| f.kind == FaultKind::Delay && f.service == LIGHT_CONTROL));
    }

    #[test]
    fn silent_sensor_answering_probes_is_drained() {
        let kb = kb();
        let mut m = Monitor::new(&kb);
        m.on_message(0, TEMPERATURE_SENSOR, &reading(21.0, 80.0), &kb);
        m.on_probe_result(TEMPERATURE_SENSOR, 1, Some("temperature-sensor#0"), 9000, 20, true, 9020);
        let records = m.observe(10_000, &view_all_healthy(&kb), &kb);
        let r = records.iter().find(|r| r.service == TEMPERATURE_SENSOR).unwrap();
        assert!(r.message_stale);
        let faults = detect(&records, &kb);
        assert!(faults
            .iter()
            .any(|f| f.kind == FaultKind::BatteryDrain && f.service == TEMPERATURE_SENSOR));
    }

    #[test]
    fn broker_outage_suppresses_staleness_rules() {
        let kb = kb();
        let mut m = Monitor::new(&kb);
        m.on_message(0, TEMPERATURE_SENSOR, &reading(21.0, 80.0), &kb);
        m.on_probe_result(TEMPERATURE_SENSOR, 1, Some("temperature-sensor#0"), 9000, 20, true, 9020);
        let mut view = view_all_healthy(&kb);
        view.broker_up = false;
        let faults = detect(&m.observe(10_000, &view, &kb), &kb);
        assert!(faults.is_empty());
    }

    #[test]
    fn low_battery_reading_raises_alarm() {
        let kb = kb();
        let mut m = Monitor::new(&kb);
        m.on_message(0, TEMPERATURE_SENSOR, &reading(21.0, 8.0), &kb);
        let faults = detect(&m.observe(1000, &view_all_healthy(&kb), &kb), &kb);
        assert_eq!(faults.len(), 1);
        assert!(faults[0].evidence.earliest_at <= 1000);
    }
}
