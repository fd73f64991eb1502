//! Container-platform behaviour: replica lifecycle, request serving and the
//! autoscaler.

use std::collections::BTreeSet;

use super::{Payload, PendingRequest, Replica, World};
use crate::system::autoscale::autoscale_step;
use crate::system::model::ReplicaState;
use crate::system::sensor::FaultCursor;
use crate::trace::{Detail, EventKind, Origin};
use crate::Millis;

impl World {
    /// Creates a replica in `starting`; it turns healthy after the startup latency.
    pub(crate) fn spawn_replica(&mut self, service: &str) -> String {
        let now = self.now();
        let rt = self.services.get_mut(service).expect("known service");
        let id = format!("{service}#{}", rt.next_index);
        rt.next_index += 1;
        rt.replicas.push(id.clone());
        let patterns = rt.spec.subscriptions.clone();
        self.replicas.insert(
            id.clone(),
            Replica {
                id: id.clone(),
                service: service.to_string(),
                state: ReplicaState::Starting,
                fault: FaultCursor::default(),
                delay: None,
                busy_until: 0,
                quarantined: false,
                retiring: false,
                pending: BTreeSet::new(),
            },
        );
        self.kernel.trace.push(
            now,
            "platform",
            id.clone(),
            Detail::ReplicaState {
                service: service.to_string(),
                from: None,
                to: ReplicaState::Starting,
            },
        );
        for pattern in patterns {
            let (sub, fresh) = self.kernel.broker.subscribe(service, &id, &pattern);
            if fresh {
                self.kernel.trace.push(
                    now,
                    id.clone(),
                    "broker",
                    Detail::Subscribe {
                        service: service.to_string(),
                        pattern,
                        subscription: sub,
                    },
                );
            }
        }
        let startup = self.cfg.sim.startup_latency_ms;
        self.kernel.schedule_in(
            startup,
            id.clone(),
            EventKind::Timer,
            Payload::ReplicaReady { replica: id.clone() },
        );
        id
    }

    pub(crate) fn on_replica_ready(&mut self, replica: &str) {
        let now = self.now();
        let Some(r) = self.replicas.get_mut(replica) else { return };
        if r.state != ReplicaState::Starting {
            return;
        }
        r.state = ReplicaState::Healthy;
        let service = r.service.clone();
        self.kernel.trace.push(
            now,
            "platform",
            replica,
            Detail::ReplicaState {
                service: service.clone(),
                from: Some(ReplicaState::Starting),
                to: ReplicaState::Healthy,
            },
        );
        // A healthy successor completes a rolling replacement.
        let rt = self.services.get_mut(&service).expect("service");
        let done: Vec<_> = rt
            .replacements
            .iter()
            .filter(|p| p.successor == replica)
            .cloned()
            .collect();
        rt.replacements.retain(|p| p.successor != replica);
        for plan in done {
            for old in plan.retired {
                if plan.quarantine {
                    self.quarantine(&old);
                }
                let drain_at = self.replicas.get(&old).map_or(now, |r| r.busy_until.max(now));
                self.kernel.schedule(
                    drain_at,
                    old.clone(),
                    EventKind::RecoveryAction,
                    Payload::Retire { replica: old.clone() },
                )
                .expect("drain time is not in the past");
            }
        }
    }

    pub(crate) fn quarantine(&mut self, replica: &str) {
        let now = self.now();
        let Some(r) = self.replicas.get_mut(replica) else { return };
        if r.quarantined || r.state == ReplicaState::Terminated {
            return;
        }
        r.quarantined = true;
        let service = r.service.clone();
        self.kernel
            .trace
            .push(now, "system-managing", replica, Detail::Quarantine { service: service.clone() });
        self.unsubscribe_all(&service, replica);
    }

    fn unsubscribe_all(&mut self, service: &str, replica: &str) {
        let now = self.now();
        for s in self.kernel.broker.unsubscribe_replica(replica) {
            let (sub, pattern) = (s.id, s.pattern);
            self.kernel.trace.push(
                now,
                replica,
                "broker",
                Detail::Unsubscribe {
                    service: service.to_string(),
                    pattern,
                    subscription: sub,
                },
            );
        }
    }

    /// Terminates a replica; its queued requests fail.
    pub(crate) fn terminate_replica(&mut self, replica: &str) {
        let now = self.now();
        let Some(r) = self.replicas.get_mut(replica) else { return };
        if r.state == ReplicaState::Terminated {
            return;
        }
        let from = r.state;
        r.state = ReplicaState::Terminated;
        let service = r.service.clone();
        let pending: Vec<u64> = std::mem::take(&mut r.pending).into_iter().collect();
        self.kernel.trace.push(
            now,
            "platform",
            replica,
            Detail::ReplicaState {
                service: service.clone(),
                from: Some(from),
                to: ReplicaState::Terminated,
            },
        );
        self.unsubscribe_all(&service, replica);
        for req in pending {
            self.finish_request(req, false);
        }
    }

    /// Least-loaded healthy replica, preferring ones not being replaced.
    fn pick_replica(&self, service: &str) -> Option<String> {
        let rt = self.services.get(service)?;
        rt.replicas
            .iter()
            .map(|id| &self.replicas[id])
            .filter(|r| r.state == ReplicaState::Healthy)
            .min_by_key(|r| (r.retiring, r.busy_until, r.id.clone()))
            .map(|r| r.id.clone())
    }

    /// Sends one request (probe or workload) to `service`.
    pub(crate) fn send_request(&mut self, service: &str, origin: Origin) -> u64 {
        let now = self.now();
        let req = self.next_req;
        self.next_req += 1;
        let window = self.cfg.sim.load_window_ms;
        if let Some(rt) = self.services.get_mut(service) {
            rt.arrivals.push_back(now);
            while rt.arrivals.front().is_some_and(|&a| a + window <= now) {
                rt.arrivals.pop_front();
            }
        }
        if origin == Origin::Probe && self.recovery {
            self.monitor.on_probe_sent(service, req, now);
        }
        let Some(replica) = self.pick_replica(service) else {
            self.record_request(req, service, None, origin, now, 0, false);
            return req;
        };
        let base = self.services[service].spec.base_service_ms;
        let cap = self.cfg.sim.latency_cap_ms;
        let r = self.replicas.get_mut(&replica).expect("picked replica");
        let arrival = now + r.delay.map_or(0, |d| d.extra_at(now));
        let start = arrival.max(r.busy_until);
        let done = start + base;
        if done - now > cap {
            self.record_request(req, service, Some(&replica), origin, now, 0, false);
            return req;
        }
        r.busy_until = done;
        r.pending.insert(req);
        self.requests.insert(
            req,
            PendingRequest {
                service: service.to_string(),
                replica: replica.clone(),
                origin,
                sent_at: now,
            },
        );
        self.kernel
            .schedule(done, replica, EventKind::WorkloadRequest, Payload::RequestDone { req })
            .expect("completion is in the future");
        req
    }

    pub(crate) fn on_request_done(&mut self, req: u64) {
        if self.requests.contains_key(&req) {
            self.finish_request(req, true);
        }
    }

    fn finish_request(&mut self, req: u64, ok: bool) {
        let Some(p) = self.requests.remove(&req) else { return };
        let now = self.now();
        if let Some(r) = self.replicas.get_mut(&p.replica) {
            r.pending.remove(&req);
        }
        self.record_request(req, &p.service, Some(&p.replica), p.origin, p.sent_at, now - p.sent_at, ok);
    }

    #[allow(clippy::too_many_arguments)]
    fn record_request(
        &mut self,
        req: u64,
        service: &str,
        replica: Option<&str>,
        origin: Origin,
        sent_at: Millis,
        latency_ms: Millis,
        ok: bool,
    ) {
        let now = self.now();
        let source = match origin {
            Origin::Probe => "platform".to_string(),
            Origin::Workload { user } => format!("user-{user}"),
        };
        self.kernel.trace.push(
            now,
            source,
            replica.unwrap_or(service).to_string(),
            Detail::Request {
                req,
                service: service.to_string(),
                replica: replica.map(str::to_string),
                origin,
                sent_at,
                latency_ms,
                ok,
            },
        );
        if origin == Origin::Probe && self.recovery {
            self.monitor
                .on_probe_result(service, req, replica, sent_at, latency_ms, ok, now);
        }
    }

    pub(crate) fn on_autoscale_tick(&mut self) {
        let now = self.now();
        let window = self.cfg.sim.load_window_ms;
        let names: Vec<String> = self.services.keys().cloned().collect();
        for name in names {
            let active: Vec<String> = self.services[&name]
                .replicas
                .iter()
                .filter(|id| {
                    let r = &self.replicas[*id];
                    r.state != ReplicaState::Terminated && !r.retiring
                })
                .cloned()
                .collect();
            let current = active.len() as u32;
            // The autoscaler never resurrects a service with no replicas left.
            if current == 0 {
                continue;
            }
            let rt = self.services.get_mut(&name).expect("service");
            while rt.arrivals.front().is_some_and(|&a| a + window <= now) {
                rt.arrivals.pop_front();
            }
            let load = rt.arrivals.len() as f64 * 1000.0 / window as f64;
            let delta = autoscale_step(&rt.policy, current, load, now, &mut rt.autoscaler);
            if delta == 0 {
                continue;
            }
            let to = (current as i64 + delta) as u32;
            self.kernel.trace.push(
                now,
                "autoscaler",
                name.clone(),
                Detail::Scale {
                    service: name.clone(),
                    from: current,
                    to,
                },
            );
            if delta > 0 {
                for _ in 0..delta {
                    self.spawn_replica(&name);
                }
            } else {
                // Newest replicas go first.
                for id in active.iter().rev().take((-delta) as usize) {
                    self.terminate_replica(id);
                }
            }
        }
        let interval = self.cfg.sim.autoscale_interval_ms;
        self.kernel
            .schedule_in(interval, "platform", EventKind::Timer, Payload::AutoscaleTick);
    }
}
