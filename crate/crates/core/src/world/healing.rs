//! Monitor ticks, fault routing and execution of recovery plans.

use super::{Payload, Replacement, World};
use crate::managing::model::{Fault, FaultKind, RecoveryAction, RecoveryActionKind};
use crate::managing::monitor::{detect, PlatformView};
use crate::system::catalog::TOPIC_FAULTS;
use crate::system::model::{ReplicaState, ServiceKind};
use crate::trace::{Detail, EventKind, MessageBody, Origin};

impl World {
    fn service_of_kind(&self, kind: ServiceKind) -> Option<String> {
        self.services
            .values()
            .find(|rt| rt.spec.kind == kind)
            .map(|rt| rt.spec.name.clone())
    }

    fn platform_view(&self) -> PlatformView {
        let mut view = PlatformView {
            broker_up: self.broker_up(),
            ..Default::default()
        };
        for (name, rt) in &self.services {
            let mut healthy = 0;
            let mut starting = 0;
            for id in &rt.replicas {
                match self.replicas[id].state {
                    ReplicaState::Healthy => {
                        healthy += 1;
                        view.healthy_replicas.push(id.clone());
                    }
                    ReplicaState::Starting => starting += 1,
                    ReplicaState::Terminated => {}
                }
            }
            view.healthy.insert(name.clone(), healthy);
            view.starting.insert(name.clone(), starting);
        }
        view
    }

    pub(crate) fn on_monitor_tick(&mut self) {
        let now = self.now();
        let probed: Vec<String> = self
            .services
            .values()
            .filter(|rt| rt.spec.kind != ServiceKind::Monitoring)
            .map(|rt| rt.spec.name.clone())
            .collect();
        for service in &probed {
            self.send_request(service, Origin::Probe);
        }
        let monitoring = self.service_of_kind(ServiceKind::Monitoring);
        if self.recovery {
            if let Some(mon) = monitoring.filter(|m| self.healthy_count(m) > 0) {
                let view = self.platform_view();
                let records = self.monitor.observe(now, &view, &self.kb);
                let since = now + self.cfg.sim.startup_latency_ms + self.cfg.sim.monitor_tick_ms;
                for d in detect(&records, &self.kb) {
                    self.next_fault += 1;
                    let fault = Fault {
                        id: self.next_fault,
                        kind: d.kind,
                        service: d.service.clone(),
                        detected_at: now,
                        evidence: d.evidence,
                    };
                    self.kernel
                        .trace
                        .push(now, mon.clone(), d.service.clone(), Detail::Detection { fault: fault.clone() });
                    self.monitor.reset_evidence(&d.service, d.kind, since);
                    self.report_fault(&mon, fault);
                }
            }
        }
        let tick = self.cfg.sim.monitor_tick_ms;
        self.kernel
            .schedule_in(tick, "platform", EventKind::Timer, Payload::MonitorTick);
    }

    /// Publishes the fault on the fault topic, falling back to the direct
    /// control-plane channel when the broker cannot carry it.
    fn report_fault(&mut self, monitoring: &str, fault: Fault) {
        let now = self.now();
        let replica = self.primary_replica(monitoring);
        let delivered = replica.is_some_and(|r| {
            let out = self.publish_from(
                &r,
                monitoring,
                TOPIC_FAULTS,
                MessageBody::FaultReport { fault: fault.clone() },
                None,
            );
            out.dropped.is_none()
        });
        if delivered {
            return;
        }
        self.kernel.trace.push(
            now,
            monitoring,
            "system-managing",
            Detail::Anomaly {
                service: monitoring.to_string(),
                what: format!("fault {} sent on the direct channel", fault.id),
            },
        );
        let delay = self.cfg.sim.broker_delay_ms;
        self.kernel
            .schedule_in(delay, monitoring, EventKind::Timer, Payload::FaultDirect { fault });
    }

    pub(crate) fn on_fault_report(&mut self, fault: Fault) {
        let now = self.now();
        let managing = self.service_of_kind(ServiceKind::Managing);
        let Some(mgr) = managing.filter(|m| self.healthy_count(m) > 0) else {
            let target = fault.service.clone();
            self.kernel.trace.push(
                now,
                "platform",
                target.clone(),
                Detail::Anomaly {
                    service: target,
                    what: format!("fault {} not handled: managing service unavailable", fault.id),
                },
            );
            return;
        };
        let diagnosis = self.planner.diagnose(&fault, &self.kb, now);
        self.kernel.trace.push(
            now,
            mgr.clone(),
            fault.service.clone(),
            Detail::Diagnosis {
                diagnosis: diagnosis.clone(),
            },
        );
        let replaced = matches!(fault.kind, FaultKind::ErroneousData | FaultKind::Delay);
        let mut rolled = false;
        for action in diagnosis.plan {
            let (executed, note) = match action.kind {
                RecoveryActionKind::Unsubscribe | RecoveryActionKind::DeleteService | RecoveryActionKind::DeployService
                    if replaced =>
                {
                    if rolled {
                        (true, "part of rolling replacement".to_string())
                    } else {
                        rolled = true;
                        self.rolling_replace(&action.target, fault.kind == FaultKind::ErroneousData)
                    }
                }
                RecoveryActionKind::TerminateAndReplace => {
                    rolled = true;
                    self.rolling_replace(&action.target, false)
                }
                RecoveryActionKind::DeployService => self.deploy(&action.target),
                RecoveryActionKind::UpdateConfig => self.escalate_min_replicas(&action.target),
                RecoveryActionKind::RaiseAlarm => (true, format!("alarm raised for {}", action.target)),
                RecoveryActionKind::EnableBackupSensor => self.enable_backup(&action.target),
                RecoveryActionKind::Unsubscribe | RecoveryActionKind::DeleteService => {
                    (false, "no replacement planned".to_string())
                }
            };
            self.record_recovery(&mgr, action, executed, note);
        }
    }

    fn record_recovery(&mut self, mgr: &str, action: RecoveryAction, executed: bool, note: String) {
        let now = self.now();
        let target = action.target.clone();
        self.kernel
            .trace
            .push(now, mgr, target, Detail::Recovery { action, executed, note });
    }

    fn live_replicas(&self, service: &str) -> Vec<String> {
        self.services.get(service).map_or_else(Vec::new, |rt| {
            rt.replicas
                .iter()
                .filter(|id| {
                    let r = &self.replicas[*id];
                    r.state != ReplicaState::Terminated && !r.retiring
                })
                .cloned()
                .collect()
        })
    }

    /// Brings the service back to at least its minimum replica count.
    fn deploy(&mut self, service: &str) -> (bool, String) {
        let Some(rt) = self.services.get(service) else {
            return (false, "unknown service".to_string());
        };
        let min = rt.policy.min_replicas.max(1) as usize;
        let live = self.live_replicas(service).len();
        let missing = min.saturating_sub(live).max(1);
        for _ in 0..missing {
            self.spawn_replica(service);
        }
        (true, format!("deployed {missing} replica(s)"))
    }

    fn escalate_min_replicas(&mut self, service: &str) -> (bool, String) {
        let target = self.kb.settings.escalated_min_replicas;
        let Some(rt) = self.services.get_mut(service) else {
            return (false, "unknown service".to_string());
        };
        rt.policy.min_replicas = rt.policy.min_replicas.max(target);
        rt.policy.max_replicas = rt.policy.max_replicas.max(rt.policy.min_replicas);
        let min = rt.policy.min_replicas as usize;
        let live = self.live_replicas(service).len();
        for _ in live..min {
            self.spawn_replica(service);
        }
        (true, format!("minimum replicas set to {min}"))
    }

    /// Starts one successor per live replica; each old replica keeps serving
    /// until its successor is healthy, then drains and terminates.
    fn rolling_replace(&mut self, service: &str, quarantine: bool) -> (bool, String) {
        let old = self.live_replicas(service);
        if old.is_empty() {
            return self.deploy(service);
        }
        for id in &old {
            let successor = self.spawn_replica(service);
            self.replicas.get_mut(id).expect("replica").retiring = true;
            self.services
                .get_mut(service)
                .expect("service")
                .replacements
                .push(Replacement {
                    successor,
                    retired: vec![id.clone()],
                    quarantine,
                });
        }
        (true, format!("replacing {} replica(s)", old.len()))
    }

    fn enable_backup(&mut self, service: &str) -> (bool, String) {
        let now = self.now();
        let Some(sensor) = self.services.get_mut(service).and_then(|rt| rt.sensor.as_mut()) else {
            return (false, "no sensor".to_string());
        };
        if !sensor.switch_to_backup(now) {
            return (false, "no backup sensor left".to_string());
        }
        let battery = sensor.battery(now);
        let drain = sensor.drain_per_min;
        self.kernel.trace.push(
            now,
            "system-managing",
            service,
            Detail::Battery {
                service: service.to_string(),
                battery,
                drain_per_min: drain,
                backup: true,
            },
        );
        (true, "backup sensor enabled".to_string())
    }
}
