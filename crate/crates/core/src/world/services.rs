//! Behaviour of the managed services: periodic publishers, control logic,
//! actuators and message handling.

use rand::Rng;

use super::{Payload, TopologyView, World};
use crate::kernel::PublishOutcome;
use crate::system::catalog::{TOPIC_HEATING_CMD, TOPIC_LIGHT_CMD, TOPIC_MOTION, TOPIC_TEMPERATURE, TOPIC_WEATHER};
use crate::system::control::{heating_command, light_command, occupied, LightInputs};
use crate::system::model::{Criticality, DayBand, ReplicaState, SensorType, ServiceKind, Weather};
use crate::system::sensor::emit_sensor_reading;
use crate::trace::{Command, DecisionInputs, Detail, EventKind, MessageBody, ValidationCode};
use crate::kernel::Message;

impl World {
    /// Healthy replica that publishes on behalf of the service.
    pub(crate) fn primary_replica(&self, service: &str) -> Option<String> {
        let rt = self.services.get(service)?;
        rt.replicas
            .iter()
            .map(|id| &self.replicas[id])
            .filter(|r| r.state == ReplicaState::Healthy)
            .min_by_key(|r| (r.quarantined, r.retiring))
            .map(|r| r.id.clone())
    }

    pub(crate) fn publish_from(
        &mut self,
        replica: &str,
        service: &str,
        topic: &str,
        body: MessageBody,
        truth: Option<f64>,
    ) -> PublishOutcome {
        let topo = TopologyView {
            replicas: &self.replicas,
            broker_up: self.services.get(&self.broker).is_some_and(|rt| {
                rt.replicas
                    .iter()
                    .any(|r| self.replicas[r].state == ReplicaState::Healthy)
            }),
        };
        let delay = self.cfg.sim.delivery_delay(topic);
        self.kernel.publish(topic, body, replica, service, truth, delay, &topo, |msg, r| {
            Payload::Deliver {
                msg,
                replica: r.to_string(),
            }
        })
    }

    pub(crate) fn on_period(&mut self, service: &str) {
        let Some(rt) = self.services.get(service) else { return };
        let kind = rt.spec.kind;
        let period = rt.spec.period_ms.unwrap_or(self.cfg.sim.monitor_tick_ms);
        match kind {
            ServiceKind::Sensor => self.emit_sensor(service),
            ServiceKind::External => self.emit_weather(service),
            ServiceKind::Actuator => self.emit_status(service),
            ServiceKind::Control => self.decide(service, true),
            _ => {}
        }
        self.kernel.schedule_in(
            period,
            service.to_string(),
            EventKind::Timer,
            Payload::Period {
                service: service.to_string(),
            },
        );
    }

    fn emit_sensor(&mut self, service: &str) {
        let now = self.now();
        let Some(replica) = self.primary_replica(service) else { return };
        let rt = &self.services[service];
        let Some(sensor) = rt.sensor.as_ref() else { return };
        let sensor_type = sensor.model.sensor_type;
        let Some(topic) = rt.spec.publishes.first().cloned() else { return };
        let shape = self.shapes.get(&sensor_type).copied().unwrap_or(crate::system::sensor::FaultShape {
            lo: f64::MIN / 4.0,
            hi: f64::MAX / 4.0,
            realistic_offset: self.cfg.chaos.realistic_offset,
            unrealistic_margin: self.cfg.chaos.unrealistic_margin,
        });
        let noise_label = format!("noise.{service}");
        let fault_label = format!("fault.{service}");
        let mut noise = self.kernel.rng.take(&noise_label);
        let mut fault_rng = self.kernel.rng.take(&fault_label);
        let cursor = &mut self.replicas.get_mut(&replica).expect("primary").fault;
        let reading = emit_sensor_reading(sensor, true, cursor, &shape, now, &mut noise, &mut fault_rng);
        self.kernel.rng.put(&noise_label, noise);
        self.kernel.rng.put(&fault_label, fault_rng);
        let Some(reading) = reading else { return };
        let truth = reading.is_false().then_some(reading.truth);
        let body = MessageBody::Reading {
            sensor: reading.sensor,
            value: reading.value,
            battery: (reading.battery * 100.0).round() / 100.0,
        };
        let out = self.publish_from(&replica, service, &topic, body, truth);
        if let Some(t) = truth {
            if !out.deliveries.is_empty() {
                self.truths.insert(out.msg, t);
            }
        }
    }

    fn emit_weather(&mut self, service: &str) {
        let p = self.cfg.sim.weather_change_prob;
        let rng = self.kernel.rng.get("weather");
        let current = self.services[service].weather;
        let next = if rng.gen_bool(p.clamp(0.0, 1.0)) {
            let others: Vec<Weather> = Weather::ALL.into_iter().filter(|w| *w != current).collect();
            others[rng.gen_range(0..others.len())]
        } else {
            current
        };
        self.services.get_mut(service).expect("service").weather = next;
        let Some(replica) = self.primary_replica(service) else { return };
        let Some(topic) = self.services[service].spec.publishes.first().cloned() else { return };
        self.publish_from(&replica, service, &topic, MessageBody::Weather { condition: next }, None);
    }

    fn emit_status(&mut self, service: &str) {
        let Some(replica) = self.primary_replica(service) else { return };
        let rt = &self.services[service];
        let Some(topic) = rt.spec.publishes.first().cloned() else { return };
        let heating = rt.spec.subscriptions.iter().any(|s| s == TOPIC_HEATING_CMD);
        let body = MessageBody::ActuatorStatus {
            heating: heating.then_some(rt.actuator.heating),
            light: (!heating).then_some(rt.actuator.light),
        };
        self.publish_from(&replica, service, &topic, body, None);
    }

    pub(crate) fn on_deliver(&mut self, msg: u64, replica: &str) {
        let now = self.now();
        let Some(m) = self.kernel.take_delivery(msg) else { return };
        let Some(r) = self.replicas.get(replica) else { return };
        if r.state != ReplicaState::Healthy {
            return;
        }
        let service = r.service.clone();
        self.kernel.trace.push(
            now,
            m.publisher.clone(),
            replica,
            Detail::Deliver {
                msg,
                topic: m.topic.clone(),
                publisher: m.publisher_service.clone(),
                service: service.clone(),
                latency_ms: now - m.published_at,
            },
        );
        let rt = self.services.get_mut(&service).expect("service");
        if !rt.seen.insert(msg) {
            return;
        }
        if rt.seen.len() > 4096 {
            let keep = rt.seen.split_off(&msg.saturating_sub(2048));
            rt.seen = keep;
        }
        match rt.spec.kind {
            ServiceKind::Control => self.control_input(&service, &m),
            ServiceKind::Actuator => self.actuator_input(&service, &m),
            ServiceKind::Monitoring if self.recovery => {
                self.monitor.on_message(now, &m.publisher_service, &m.body, &self.kb);
            }
            ServiceKind::Managing if self.recovery => {
                if let MessageBody::FaultReport { fault } = m.body {
                    self.on_fault_report(fault);
                }
            }
            _ => {}
        }
    }

    fn control_input(&mut self, service: &str, m: &Message) {
        let now = self.now();
        let topic = base_topic(&m.topic);
        match &m.body {
            MessageBody::Reading { sensor, value, .. } => {
                let code = if self.recovery {
                    self.kb.validate_reading(Some(*sensor), *value)
                } else {
                    ValidationCode::Unchecked
                };
                let truth = self.truths.get(&m.id).copied().unwrap_or(*value);
                self.kernel.trace.push(
                    now,
                    service,
                    m.publisher.clone(),
                    Detail::Validation {
                        service: service.to_string(),
                        msg: m.id,
                        publisher: m.publisher_service.clone(),
                        sensor: *sensor,
                        value: *value,
                        code,
                        is_false: truth != *value,
                    },
                );
                if !matches!(code, ValidationCode::Accepted | ValidationCode::Unchecked) {
                    return;
                }
                let ctl = &mut self.services.get_mut(service).expect("service").control;
                ctl.rx.insert(topic.to_string(), now);
                match sensor {
                    SensorType::Temperature => ctl.temperature = Some((*value, truth)),
                    SensorType::Motion => {
                        if *value >= 0.5 {
                            ctl.last_motion = Some(now);
                        }
                        if truth >= 0.5 {
                            ctl.last_motion_truth = Some(now);
                        }
                    }
                }
            }
            MessageBody::Weather { condition } => {
                let ctl = &mut self.services.get_mut(service).expect("service").control;
                ctl.rx.insert(topic.to_string(), now);
                ctl.weather = Some(*condition);
            }
            MessageBody::ActuatorStatus { .. } => {
                let ctl = &mut self.services.get_mut(service).expect("service").control;
                ctl.rx.insert(topic.to_string(), now);
            }
            _ => return,
        }
        self.decide(service, false);
    }

    /// Evaluates the control rule; publishes on change, and always on refresh.
    pub(crate) fn decide(&mut self, service: &str, refresh: bool) {
        let now = self.now();
        let rt = &self.services[service];
        let ctl = &rt.control;
        let fresh = |topic: &str| {
            ctl.rx
                .get(topic)
                .is_some_and(|&t| now <= t + self.cfg.staleness(topic))
        };
        let missing: Vec<String> = rt
            .spec
            .required_inputs
            .iter()
            .filter(|i| i.criticality != Criticality::Display && !fresh(&i.topic))
            .map(|i| i.topic.clone())
            .collect();
        let prefs = &self.cfg.preferences;
        let heating = rt.spec.publishes.iter().any(|t| t == TOPIC_HEATING_CMD);
        let (topic, command, degraded, observed, truth) = if heating {
            let temp = fresh(TOPIC_TEMPERATURE).then_some(ctl.temperature).flatten();
            let observed = DecisionInputs {
                temperature: temp.map(|t| t.0),
                ..Default::default()
            };
            let truth = DecisionInputs {
                temperature: temp.map(|t| t.1),
                ..Default::default()
            };
            match heating_command(observed.temperature, prefs, ctl.heating) {
                Some(h) => (
                    TOPIC_HEATING_CMD,
                    Some(Command::Heating(h)),
                    !missing.is_empty(),
                    observed,
                    truth,
                ),
                None => (TOPIC_HEATING_CMD, None, false, observed, truth),
            }
        } else if rt.spec.publishes.iter().any(|t| t == TOPIC_LIGHT_CMD) {
            let timeout = prefs.light_timeout_ms;
            let motion_fresh = fresh(TOPIC_MOTION);
            let occ = motion_fresh.then(|| occupied(ctl.last_motion, now, timeout));
            let occ_truth = motion_fresh.then(|| occupied(ctl.last_motion_truth, now, timeout));
            let weather = fresh(TOPIC_WEATHER).then_some(ctl.weather).flatten();
            let band = DayBand::at(self.cfg.sim.day_start_ms + now);
            let d = light_command(
                LightInputs {
                    occupied: occ,
                    weather,
                    band,
                },
                prefs,
            );
            let observed = DecisionInputs {
                occupied: occ,
                weather,
                band: Some(band),
                ..Default::default()
            };
            let truth = DecisionInputs {
                occupied: occ_truth,
                ..observed
            };
            (
                TOPIC_LIGHT_CMD,
                Some(Command::Light(d.level)),
                d.degraded || !missing.is_empty(),
                observed,
                truth,
            )
        } else {
            return;
        };

        let Some(replica) = self.primary_replica(service) else { return };
        let Some(command) = command else {
            if refresh {
                self.kernel.trace.push(
                    now,
                    replica,
                    service,
                    Detail::Decision {
                        service: service.to_string(),
                        command: None,
                        degraded: false,
                        missing,
                        observed,
                        truth,
                    },
                );
            }
            return;
        };
        let changed = self.services[service].control.last_published != Some((command, degraded));
        if !(refresh || changed) {
            return;
        }
        let ctl = &mut self.services.get_mut(service).expect("service").control;
        ctl.last_published = Some((command, degraded));
        if let Command::Heating(h) = command {
            ctl.heating = h;
        }
        self.kernel.trace.push(
            now,
            replica.clone(),
            service,
            Detail::Decision {
                service: service.to_string(),
                command: Some(command),
                degraded,
                missing,
                observed,
                truth,
            },
        );
        self.publish_from(&replica, service, topic, MessageBody::Command { command, degraded }, None);
    }

    fn actuator_input(&mut self, service: &str, m: &Message) {
        let now = self.now();
        let MessageBody::Command { command, .. } = &m.body else { return };
        let rt = self.services.get_mut(service).expect("service");
        let accepts = match command {
            Command::Heating(_) => rt.spec.subscriptions.iter().any(|s| s == TOPIC_HEATING_CMD),
            Command::Light(_) => rt.spec.subscriptions.iter().any(|s| s == TOPIC_LIGHT_CMD),
        };
        if !accepts {
            return;
        }
        match command {
            Command::Heating(h) => rt.actuator.heating = *h,
            Command::Light(l) => rt.actuator.light = *l,
        }
        rt.actuator.last_command_at = Some(now);
        self.kernel.trace.push(
            now,
            m.publisher.clone(),
            service,
            Detail::Actuate {
                service: service.to_string(),
                command: *command,
                msg: m.id,
            },
        );
    }
}

/// Topic without sub-levels below the catalog topic (`sensor/temperature/x`
/// is tracked as `sensor/temperature`).
pub(crate) fn base_topic(topic: &str) -> &str {
    for known in [TOPIC_TEMPERATURE, TOPIC_MOTION, TOPIC_WEATHER] {
        if topic.starts_with(known) {
            return known;
        }
    }
    topic
}
