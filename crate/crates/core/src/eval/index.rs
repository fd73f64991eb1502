//! One pass over a trace producing per-second service samples and the record
//! lists every evaluation metric is computed from.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chaos::model::ChaosLogEntry;
use crate::config::Config;
use crate::eval::impact::ImpactLevel;
use crate::managing::knowledge::KnowledgeBase;
use crate::managing::model::{Fault, RecoveryAction};
use crate::system::control::{heating_command, light_command, LightInputs};
use crate::system::catalog;
use crate::system::model::{Criticality, DayBand, HeatingState, ReplicaState, ServiceKind, ServiceSpec};
use crate::trace::{Command, Detail, MessageBody, Origin, Trace, TraceRecord, ValidationCode};
use crate::Millis;

/// State of one service at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSample {
    pub healthy: u32,
    pub starting: u32,
    /// A healthy replica answers probes promptly.
    pub responsive: bool,
    /// A periodic publisher has not attempted a publish for 1.5 periods.
    pub publisher_idle: bool,
    /// No usable input arrived on the service's key inputs for 1.5 periods.
    pub input_idle: bool,
    /// Non-display inputs older than their staleness window.
    pub stale_inputs: u32,
    pub impact: ImpactLevel,
}

impl ServiceSample {
    pub fn idle(&self) -> bool {
        self.publisher_idle || self.input_idle
    }

    pub fn available(&self) -> bool {
        self.responsive && !self.publisher_idle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRec {
    pub service: String,
    pub probe: bool,
    pub sent_at: Millis,
    pub done_at: Millis,
    pub latency_ms: Millis,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRec {
    pub at: Millis,
    pub service: String,
    pub publisher: String,
    pub accepted: bool,
    pub is_false: bool,
    /// The value lies outside the plausible range, whatever the code says.
    pub out_of_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRec {
    pub at: Millis,
    pub service: String,
    pub degraded: bool,
    /// The command equals the rule evaluated on true input values.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishRec {
    pub at: Millis,
    pub service: String,
    /// Payload carries the true value.
    pub clean: bool,
    pub deliveries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRec {
    pub at: Millis,
    pub service: String,
    pub topic: String,
    pub publisher: String,
    /// Slower than the base delivery delay, or the first after a staleness gap.
    pub delayed: bool,
}

pub struct TraceIndex {
    pub step_ms: Millis,
    pub end_ms: Millis,
    /// Catalog services in configuration order.
    pub services: Vec<String>,
    samples: BTreeMap<String, Vec<ServiceSample>>,
    /// Completed requests ordered by completion.
    pub requests: Vec<RequestRec>,
    pub validations: Vec<ValidationRec>,
    pub decisions: Vec<DecisionRec>,
    pub publishes: Vec<PublishRec>,
    pub deliveries: Vec<DeliveryRec>,
    pub chaos: Vec<ChaosLogEntry>,
    pub faults: Vec<Fault>,
    pub recoveries: Vec<(Millis, RecoveryAction, bool)>,
}

#[derive(Default)]
struct ProbeTrack {
    /// (sent_at, done_at, ok), by send time.
    by_sent: Vec<(Millis, Millis, bool, u64)>,
    /// Indices into `by_sent`, by completion time.
    by_done: Vec<usize>,
    sent_ptr: usize,
    done_ptr: usize,
    outstanding: BTreeSet<(Millis, u64)>,
    last_ok: Option<bool>,
}

impl ProbeTrack {
    fn advance(&mut self, t: Millis) {
        while self.sent_ptr < self.by_sent.len() && self.by_sent[self.sent_ptr].0 < t {
            let (sent, _, _, req) = self.by_sent[self.sent_ptr];
            self.outstanding.insert((sent, req));
            self.sent_ptr += 1;
        }
        while self.done_ptr < self.by_done.len() && self.by_sent[self.by_done[self.done_ptr]].1 < t {
            let (sent, _, ok, req) = self.by_sent[self.by_done[self.done_ptr]];
            self.outstanding.remove(&(sent, req));
            self.last_ok = Some(ok);
            self.done_ptr += 1;
        }
    }
}

struct Sweep<'a> {
    cfg: &'a Config,
    kb: KnowledgeBase,
    specs: BTreeMap<String, &'a ServiceSpec>,
    broker: Option<String>,
    replicas: BTreeMap<String, ReplicaState>,
    counts: BTreeMap<String, (u32, u32)>,
    last_attempt: BTreeMap<String, (Millis, bool)>,
    last_output: BTreeMap<String, Millis>,
    last_rx: BTreeMap<(String, String), Millis>,
    last_nondegraded: BTreeMap<(String, String), Millis>,
    last_delivery: BTreeMap<(String, String), Millis>,
    /// Message id to (topic, degraded flag of a command, is a reading).
    messages: BTreeMap<u64, (String, Option<bool>, bool)>,
    heating_truth: BTreeMap<String, HeatingState>,
}

impl TraceIndex {
    /// Indexes `trace` up to `end_ms` with one sample per impact step. The
    /// sample at `t` is the state just before the events stamped `t`.
    pub fn build(trace: &Trace, cfg: &Config, end_ms: Millis) -> Self {
        let step = cfg.evaluation.impact_step_ms.max(1);
        let mut sweep = Sweep {
            cfg,
            kb: KnowledgeBase::from_config(cfg),
            specs: cfg.services.iter().map(|s| (s.name.clone(), s)).collect(),
            broker: cfg
                .services
                .iter()
                .find(|s| s.kind == ServiceKind::Broker)
                .map(|s| s.name.clone()),
            replicas: BTreeMap::new(),
            counts: BTreeMap::new(),
            last_attempt: BTreeMap::new(),
            last_output: BTreeMap::new(),
            last_rx: BTreeMap::new(),
            last_nondegraded: BTreeMap::new(),
            last_delivery: BTreeMap::new(),
            messages: BTreeMap::new(),
            heating_truth: BTreeMap::new(),
        };
        let mut index = TraceIndex {
            step_ms: step,
            end_ms,
            services: cfg.services.iter().map(|s| s.name.clone()).collect(),
            samples: BTreeMap::new(),
            requests: Vec::new(),
            validations: Vec::new(),
            decisions: Vec::new(),
            publishes: Vec::new(),
            deliveries: Vec::new(),
            chaos: Vec::new(),
            faults: Vec::new(),
            recoveries: Vec::new(),
        };

        let mut probes: BTreeMap<String, ProbeTrack> = BTreeMap::new();
        for r in trace.records() {
            if let Detail::Request {
                req,
                service,
                origin,
                sent_at,
                latency_ms,
                ok,
                ..
            } = &r.detail
            {
                let probe = *origin == Origin::Probe;
                index.requests.push(RequestRec {
                    service: service.clone(),
                    probe,
                    sent_at: *sent_at,
                    done_at: r.at,
                    latency_ms: *latency_ms,
                    ok: *ok,
                });
                if probe {
                    probes
                        .entry(service.clone())
                        .or_default()
                        .by_sent
                        .push((*sent_at, r.at, *ok, *req));
                }
            }
        }
        for track in probes.values_mut() {
            track.by_sent.sort_by_key(|p| (p.0, p.3));
            let mut order: Vec<usize> = (0..track.by_sent.len()).collect();
            order.sort_by_key(|&i| (track.by_sent[i].1, track.by_sent[i].3));
            track.by_done = order;
        }

        let records = trace.records();
        let mut next = 0;
        let n = end_ms / step;
        for k in 1..=n {
            let t = k * step;
            while next < records.len() && records[next].at < t {
                sweep.apply(&records[next], &mut index);
                next += 1;
            }
            for track in probes.values_mut() {
                track.advance(t);
            }
            for name in &index.services {
                let s = sweep.sample(name, t, probes.get(name));
                index.samples.entry(name.clone()).or_default().push(s);
            }
        }
        while next < records.len() && records[next].at <= end_ms {
            sweep.apply(&records[next], &mut index);
            next += 1;
        }
        index.requests.retain(|r| r.done_at <= end_ms);
        index
    }

    /// Samples with time in `(from, to]`.
    pub fn samples_in(&self, service: &str, from: Millis, to: Millis) -> &[ServiceSample] {
        let Some(all) = self.samples.get(service) else { return &[] };
        let lo = ((from / self.step_ms) as usize).min(all.len());
        let hi = ((to / self.step_ms) as usize).min(all.len());
        &all[lo..hi.max(lo)]
    }

    /// Sample at time `t`, which must be a multiple of the step.
    pub fn sample_at(&self, service: &str, t: Millis) -> Option<&ServiceSample> {
        if t == 0 || !t.is_multiple_of(self.step_ms) {
            return None;
        }
        self.samples.get(service)?.get((t / self.step_ms - 1) as usize)
    }

    /// Time of the sample at position `i` in a slice starting after `from`.
    pub fn sample_time(&self, from: Millis, i: usize) -> Millis {
        (from / self.step_ms + 1 + i as Millis) * self.step_ms
    }

    /// Successful requests completing in `(from, to]`.
    pub fn completed(&self, from: Millis, to: Millis) -> impl Iterator<Item = &RequestRec> {
        self.requests
            .iter()
            .filter(move |r| r.ok && r.done_at > from && r.done_at <= to)
    }

    /// Requests sent at or before `at` that had not completed by `at`.
    pub fn outstanding_at(&self, at: Millis) -> impl Iterator<Item = &RequestRec> {
        self.requests
            .iter()
            .filter(move |r| r.sent_at <= at && r.done_at > at)
    }
}

impl Sweep<'_> {
    fn rx(&mut self, service: &str, topic: &str, at: Millis) {
        self.last_rx.insert((service.to_string(), topic.to_string()), at);
    }

    fn kind(&self, service: &str) -> Option<ServiceKind> {
        self.specs.get(service).map(|s| s.kind)
    }

    fn apply(&mut self, rec: &TraceRecord, index: &mut TraceIndex) {
        let at = rec.at;
        match &rec.detail {
            Detail::ReplicaState { service, to, .. } => {
                let prev = self.replicas.insert(rec.target.clone(), *to);
                let c = self.counts.entry(service.clone()).or_default();
                match prev {
                    Some(ReplicaState::Healthy) => c.0 = c.0.saturating_sub(1),
                    Some(ReplicaState::Starting) => c.1 = c.1.saturating_sub(1),
                    _ => {}
                }
                match to {
                    ReplicaState::Healthy => c.0 += 1,
                    ReplicaState::Starting => c.1 += 1,
                    ReplicaState::Terminated => {}
                }
            }
            Detail::Publish {
                msg,
                topic,
                service,
                body,
                truth,
                deliveries,
            } => {
                self.last_attempt.insert(service.clone(), (at, false));
                if *deliveries > 0 {
                    self.last_output.insert(service.clone(), at);
                }
                let degraded = match body {
                    MessageBody::Command { degraded, .. } => Some(*degraded),
                    _ => None,
                };
                let reading = matches!(body, MessageBody::Reading { .. });
                self.messages.insert(*msg, (topic.clone(), degraded, reading));
                index.publishes.push(PublishRec {
                    at,
                    service: service.clone(),
                    clean: truth.is_none(),
                    deliveries: *deliveries,
                });
            }
            Detail::Drop { service, .. } => {
                self.last_attempt.insert(service.clone(), (at, true));
            }
            Detail::Deliver {
                msg,
                topic,
                publisher,
                service,
                latency_ms,
            } => {
                let key = (service.clone(), topic.clone());
                let gap = self
                    .last_delivery
                    .get(&key)
                    .is_some_and(|&l| at - l > self.cfg.staleness(topic));
                let delayed = *latency_ms > self.cfg.sim.delivery_delay(topic) || gap;
                self.last_delivery.insert(key.clone(), at);
                index.deliveries.push(DeliveryRec {
                    at,
                    service: service.clone(),
                    topic: topic.clone(),
                    publisher: publisher.clone(),
                    delayed,
                });
                let (degraded, reading) = self
                    .messages
                    .get(msg)
                    .map_or((None, false), |m| (m.1, m.2));
                let validated = reading && self.kind(service) == Some(ServiceKind::Control);
                if !validated {
                    self.rx(service, topic, at);
                }
                if degraded == Some(false) {
                    self.last_nondegraded.insert(key, at);
                }
            }
            Detail::Validation {
                service,
                msg,
                publisher,
                sensor,
                value,
                code,
                is_false,
            } => {
                let accepted = matches!(code, ValidationCode::Accepted | ValidationCode::Unchecked);
                if accepted {
                    if let Some((topic, _, _)) = self.messages.get(msg).cloned() {
                        self.rx(service, &topic, at);
                    }
                }
                index.validations.push(ValidationRec {
                    at,
                    service: service.clone(),
                    publisher: publisher.clone(),
                    accepted,
                    is_false: *is_false,
                    out_of_range: self.kb.validate_reading(Some(*sensor), *value) == ValidationCode::OutOfRange,
                });
            }
            Detail::Decision {
                service,
                command: Some(command),
                degraded,
                truth,
                ..
            } => {
                let prefs = &self.cfg.preferences;
                let consistent = match command {
                    Command::Heating(h) => {
                        let prev = self.heating_truth.get(service).copied().unwrap_or_default();
                        let expected = heating_command(truth.temperature, prefs, prev);
                        if let Some(e) = expected {
                            self.heating_truth.insert(service.clone(), e);
                        }
                        expected == Some(*h)
                    }
                    Command::Light(level) => {
                        let band = truth
                            .band
                            .unwrap_or_else(|| DayBand::at(self.cfg.sim.day_start_ms + at));
                        let expected = light_command(
                            LightInputs {
                                occupied: truth.occupied,
                                weather: truth.weather,
                                band,
                            },
                            prefs,
                        );
                        expected.level == *level
                    }
                };
                index.decisions.push(DecisionRec {
                    at,
                    service: service.clone(),
                    degraded: *degraded,
                    consistent,
                });
            }
            Detail::Chaos(entry) => index.chaos.push(entry.clone()),
            Detail::Detection { fault } => index.faults.push(fault.clone()),
            Detail::Recovery { action, executed, .. } => index.recoveries.push((at, action.clone(), *executed)),
            _ => {}
        }
    }

    fn absent(&self, service: &str, topic: &str, t: Millis) -> bool {
        self.last_rx
            .get(&(service.to_string(), topic.to_string()))
            .is_none_or(|&l| t - l > self.cfg.staleness(topic))
    }

    fn topic_period(&self, topic: &str) -> Millis {
        catalog::topic_period(&self.cfg.services, topic)
            .unwrap_or(self.cfg.staleness(topic) / self.cfg.sim.staleness_factor.max(1))
    }

    fn sample(&self, service: &str, t: Millis, probes: Option<&ProbeTrack>) -> ServiceSample {
        let spec = self.specs[service];
        let (healthy, starting) = self.counts.get(service).copied().unwrap_or_default();
        let threshold = self.kb.settings.delay_threshold_ms;
        let probe_ok = probes.is_none_or(|p| {
            p.last_ok != Some(false) && p.outstanding.first().is_none_or(|(sent, _)| t - sent <= threshold)
        });
        let responsive = healthy > 0 && probe_ok;

        let publisher_idle = matches!(
            spec.kind,
            ServiceKind::Sensor | ServiceKind::External | ServiceKind::Actuator
        ) && spec.period_ms.is_some_and(|p| {
            let last = self.last_attempt.get(service).map_or(0, |l| l.0);
            t - last > p * 3 / 2
        });

        let inputs = &spec.required_inputs;
        let critical: Vec<_> = inputs.iter().filter(|i| i.criticality == Criticality::Critical).collect();
        let key: Vec<_> = if critical.is_empty() { inputs.iter().collect() } else { critical.clone() };
        let input_idle = !key.is_empty()
            && key.iter().all(|i| {
                let last = self
                    .last_rx
                    .get(&(service.to_string(), i.topic.clone()))
                    .copied()
                    .unwrap_or(0);
                t - last > self.topic_period(&i.topic) * 3 / 2
            });

        let absent: Vec<bool> = inputs.iter().map(|i| self.absent(service, &i.topic, t)).collect();
        let stale_inputs = inputs
            .iter()
            .zip(&absent)
            .filter(|(i, a)| **a && i.criticality != Criticality::Display)
            .count() as u32;

        let broker_up = self
            .broker
            .as_ref()
            .is_none_or(|b| self.counts.get(b).is_some_and(|c| c.0 > 0));
        let produces = matches!(
            spec.kind,
            ServiceKind::Sensor | ServiceKind::External | ServiceKind::Control | ServiceKind::Actuator
        );
        let output_lost = produces
            && self.kb.output_staleness(service).is_some_and(|st| {
                self.last_attempt.get(service).is_some_and(|l| l.1)
                    || self.last_output.get(service).is_none_or(|&l| t - l > st)
            });
        let all_critical_absent = !critical.is_empty()
            && inputs
                .iter()
                .zip(&absent)
                .filter(|(i, _)| i.criticality == Criticality::Critical)
                .all(|(_, a)| *a);
        let escalated = inputs.iter().any(|i| {
            i.escalate_after_ms.is_some_and(|after| {
                let last = self
                    .last_rx
                    .get(&(service.to_string(), i.topic.clone()))
                    .copied()
                    .unwrap_or(0);
                t - last > self.cfg.staleness(&i.topic) + after
            })
        });
        let partial = inputs
            .iter()
            .zip(&absent)
            .any(|(i, a)| *a && i.criticality != Criticality::Display);
        let degraded = inputs.iter().zip(&absent).any(|(i, a)| {
            let key = (service.to_string(), i.topic.clone());
            i.criticality != Criticality::Display
                && !*a
                && self.messages_carry_commands(&i.topic)
                && self
                    .last_nondegraded
                    .get(&key)
                    .is_none_or(|&l| t - l > self.cfg.staleness(&i.topic))
        });
        let display_missing = inputs
            .iter()
            .zip(&absent)
            .any(|(i, a)| *a && i.criticality == Criticality::Display);

        let impact = if !broker_up || healthy == 0 || output_lost || all_critical_absent || escalated {
            ImpactLevel::High
        } else if partial || degraded {
            ImpactLevel::Medium
        } else if display_missing {
            ImpactLevel::Low
        } else {
            ImpactLevel::None
        };

        ServiceSample {
            healthy,
            starting,
            responsive,
            publisher_idle,
            input_idle,
            stale_inputs,
            impact,
        }
    }

    /// Topics published by a control service carry commands.
    fn messages_carry_commands(&self, topic: &str) -> bool {
        catalog::topic_publisher(&self.cfg.services, topic).is_some_and(|s| s.kind == ServiceKind::Control)
    }
}
