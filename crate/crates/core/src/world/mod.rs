//! The runnable simulation: managed system, platform, self-healing layer and
//! chaos injection on one discrete-event kernel.

mod healing;
mod inject;
mod platform;
mod services;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::chaos::model::ChaosLogEntry;
use crate::config::Config;
use crate::kernel::{Kernel, Topology};
use crate::managing::{KnowledgeBase, Monitor, Planner};
use crate::system::autoscale::AutoscalerState;
use crate::system::model::{
    ActuatorState, FaultMode, HeatingState, InjectedDelay, ReplicaPolicy, ReplicaState, SensorType,
    ServiceKind, ServiceSpec, Weather,
};
use crate::system::sensor::{FaultCursor, FaultShape, SensorState};
use crate::trace::{Command, DropReason, Origin, Trace};
use crate::workload::{generate_requests, LoadProfile};
use crate::{Error, Millis, Result};

pub use inject::InjectAction;

/// Event payloads of the simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Periodic publish (sensors, weather, actuator status) or command refresh.
    Period { service: String },
    Deliver { msg: u64, replica: String },
    ReplicaReady { replica: String },
    /// Graceful termination of a replaced replica once its queue drained.
    Retire { replica: String },
    MonitorTick,
    AutoscaleTick,
    WorkloadSend { service: String, user: u32 },
    RequestDone { req: u64 },
    Inject { experiment: usize, action: InjectAction },
    /// Fault report on the control-plane channel when the broker is down.
    FaultDirect { fault: crate::managing::model::Fault },
}

#[derive(Debug, Clone)]
pub(crate) struct Replica {
    pub id: String,
    pub service: String,
    pub state: ReplicaState,
    pub fault: FaultCursor,
    pub delay: Option<InjectedDelay>,
    pub busy_until: Millis,
    pub quarantined: bool,
    /// Being replaced; receives no new requests once a successor is healthy.
    pub retiring: bool,
    pub pending: BTreeSet<u64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Replacement {
    pub successor: String,
    pub retired: Vec<String>,
    pub quarantine: bool,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ControlState {
    /// Last usable delivery per input topic.
    pub rx: BTreeMap<String, Millis>,
    pub temperature: Option<(f64, f64)>,
    pub last_motion: Option<Millis>,
    pub last_motion_truth: Option<Millis>,
    pub weather: Option<Weather>,
    pub heating: HeatingState,
    pub last_published: Option<(Command, bool)>,
}

#[derive(Debug, Clone)]
pub(crate) struct ServiceRuntime {
    pub spec: ServiceSpec,
    pub policy: ReplicaPolicy,
    pub replicas: Vec<String>,
    pub next_index: u32,
    pub autoscaler: AutoscalerState,
    pub arrivals: VecDeque<Millis>,
    pub sensor: Option<SensorState>,
    pub control: ControlState,
    pub actuator: ActuatorState,
    pub weather: Weather,
    pub seen: BTreeSet<u64>,
    pub replacements: Vec<Replacement>,
}

#[derive(Debug, Clone)]
pub(crate) struct PendingRequest {
    pub service: String,
    pub replica: String,
    pub origin: Origin,
    pub sent_at: Millis,
}

pub(crate) struct ActiveExperiment {
    pub id: String,
    pub scenario: crate::chaos::model::Scenario,
    pub targets: Vec<String>,
    pub pods_killed: u32,
}

pub struct World {
    pub(crate) cfg: Config,
    pub(crate) kernel: Kernel<Payload>,
    pub(crate) services: BTreeMap<String, ServiceRuntime>,
    pub(crate) replicas: BTreeMap<String, Replica>,
    pub(crate) kb: KnowledgeBase,
    pub(crate) monitor: Monitor,
    pub(crate) planner: Planner,
    pub(crate) recovery: bool,
    pub(crate) requests: BTreeMap<u64, PendingRequest>,
    pub(crate) next_req: u64,
    pub(crate) next_fault: u64,
    /// True sensor values of messages whose payload was replaced by a fault.
    pub(crate) truths: BTreeMap<u64, f64>,
    pub(crate) experiments: Vec<ActiveExperiment>,
    pub(crate) chaos_log: Vec<ChaosLogEntry>,
    pub(crate) shapes: BTreeMap<SensorType, FaultShape>,
    pub(crate) broker: String,
}

/// Borrowed view answering the kernel's routing questions.
pub(crate) struct TopologyView<'a> {
    pub replicas: &'a BTreeMap<String, Replica>,
    pub broker_up: bool,
}

impl Topology for TopologyView<'_> {
    fn broker_available(&self) -> bool {
        self.broker_up
    }

    fn publisher_blocked(&self, replica: &str) -> Option<DropReason> {
        match self.replicas.get(replica) {
            Some(r) if r.state == ReplicaState::Healthy && !r.quarantined => None,
            Some(r) if r.state == ReplicaState::Healthy => Some(DropReason::Quarantined),
            _ => Some(DropReason::PublisherNotHealthy),
        }
    }

    fn subscriber_live(&self, replica: &str) -> bool {
        self.replicas
            .get(replica)
            .is_some_and(|r| r.state == ReplicaState::Healthy)
    }

    fn channel_delay(&self, replica: &str, at: Millis) -> Millis {
        self.replicas
            .get(replica)
            .and_then(|r| r.delay)
            .map_or(0, |d| d.extra_at(at))
    }
}

impl World {
    /// Builds the system at time 0 with every service starting its minimum
    /// replica count. `recovery` switches the whole self-healing layer.
    pub fn new(cfg: Config, recovery: bool) -> Result<Self> {
        cfg.validate()?;
        let kb = KnowledgeBase::from_config(&cfg);
        let broker = cfg
            .services
            .iter()
            .find(|s| s.kind == ServiceKind::Broker)
            .map(|s| s.name.clone())
            .ok_or_else(|| Error::config("services", "catalog needs a broker service"))?;
        let shapes = kb
            .settings
            .ranges
            .iter()
            .map(|(ty, r)| {
                (
                    *ty,
                    FaultShape {
                        lo: r.lo,
                        hi: r.hi,
                        realistic_offset: cfg.chaos.realistic_offset,
                        unrealistic_margin: cfg.chaos.unrealistic_margin,
                    },
                )
            })
            .collect();
        let services = cfg
            .services
            .iter()
            .map(|spec| {
                let sensor = spec
                    .reading
                    .clone()
                    .map(|m| SensorState::new(m, kb.backups_for(&spec.name)));
                (
                    spec.name.clone(),
                    ServiceRuntime {
                        spec: spec.clone(),
                        policy: spec.replica_policy.clone(),
                        replicas: Vec::new(),
                        next_index: 0,
                        autoscaler: AutoscalerState::default(),
                        arrivals: VecDeque::new(),
                        sensor,
                        control: ControlState::default(),
                        actuator: ActuatorState::default(),
                        weather: Weather::Sunny,
                        seen: BTreeSet::new(),
                        replacements: Vec::new(),
                    },
                )
            })
            .collect();
        let mut world = Self {
            kernel: Kernel::new(cfg.seed),
            monitor: Monitor::new(&kb),
            planner: Planner::new(),
            kb,
            services,
            replicas: BTreeMap::new(),
            recovery,
            requests: BTreeMap::new(),
            next_req: 0,
            next_fault: 0,
            truths: BTreeMap::new(),
            experiments: Vec::new(),
            chaos_log: Vec::new(),
            shapes,
            broker,
            cfg,
        };
        world.boot();
        Ok(world)
    }

    fn boot(&mut self) {
        let startup = self.cfg.sim.startup_latency_ms;
        let names: Vec<String> = self.services.keys().cloned().collect();
        for name in &names {
            let n = self.services[name].policy.min_replicas;
            for _ in 0..n {
                self.spawn_replica(name);
            }
        }
        let weather_rng = self.kernel.rng.get("weather");
        let initial = Weather::ALL[rand::Rng::gen_range(weather_rng, 0..Weather::ALL.len())];
        for name in &names {
            let rt = self.services.get_mut(name).expect("service");
            rt.weather = initial;
            if rt.spec.period_ms.is_some() && rt.spec.kind != ServiceKind::Ui {
                self.kernel.schedule_in(
                    startup,
                    name.clone(),
                    crate::trace::EventKind::Timer,
                    Payload::Period { service: name.clone() },
                );
            }
        }
        let tick = self.cfg.sim.monitor_tick_ms;
        self.kernel
            .schedule_in(tick, "platform", crate::trace::EventKind::Timer, Payload::MonitorTick);
        let scale = self.cfg.sim.autoscale_interval_ms;
        self.kernel
            .schedule_in(scale, "platform", crate::trace::EventKind::Timer, Payload::AutoscaleTick);
    }

    pub fn now(&self) -> Millis {
        self.kernel.now()
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn recovery(&self) -> bool {
        self.recovery
    }

    pub fn trace(&self) -> &Trace {
        &self.kernel.trace
    }

    pub fn into_trace(self) -> Trace {
        self.kernel.trace
    }

    pub fn chaos_log(&self) -> &[ChaosLogEntry] {
        &self.chaos_log
    }

    /// Processes every event due at or before `t_end`.
    pub fn run_until(&mut self, t_end: Millis) -> Result<()> {
        let start = self.kernel.begin_run(t_end)?;
        while let Some(ev) = self.kernel.pop_due(t_end) {
            self.handle(ev.payload);
        }
        self.kernel.end_run(t_end, start);
        Ok(())
    }

    fn handle(&mut self, payload: Payload) {
        match payload {
            Payload::Period { service } => self.on_period(&service),
            Payload::Deliver { msg, replica } => self.on_deliver(msg, &replica),
            Payload::ReplicaReady { replica } => self.on_replica_ready(&replica),
            Payload::Retire { replica } => self.terminate_replica(&replica),
            Payload::MonitorTick => self.on_monitor_tick(),
            Payload::AutoscaleTick => self.on_autoscale_tick(),
            Payload::WorkloadSend { service, user } => {
                self.send_request(&service, Origin::Workload { user });
            }
            Payload::RequestDone { req } => self.on_request_done(req),
            Payload::Inject { experiment, action } => self.on_inject(experiment, action),
            Payload::FaultDirect { fault } => self.on_fault_report(fault),
        }
    }

    /// Schedules the open-loop user ramp of `profile`.
    pub fn schedule_workload(&mut self, profile: &LoadProfile) -> Result<()> {
        profile.validate()?;
        if !self.services.contains_key(&profile.target) {
            return Err(Error::UnknownService(profile.target.clone()));
        }
        let planned = generate_requests(profile, self.kernel.rng.get("workload"));
        for r in planned {
            self.kernel.schedule(
                r.at,
                profile.target.clone(),
                crate::trace::EventKind::WorkloadRequest,
                Payload::WorkloadSend {
                    service: profile.target.clone(),
                    user: r.user,
                },
            )?;
        }
        Ok(())
    }

    pub(crate) fn broker_up(&self) -> bool {
        self.healthy_count(&self.broker) > 0
    }

    pub fn healthy_count(&self, service: &str) -> u32 {
        self.services.get(service).map_or(0, |rt| {
            rt.replicas
                .iter()
                .filter(|r| self.replicas[*r].state == ReplicaState::Healthy)
                .count() as u32
        })
    }

    pub fn replica_count(&self, service: &str) -> u32 {
        self.services.get(service).map_or(0, |rt| {
            rt.replicas
                .iter()
                .filter(|r| self.replicas[*r].state != ReplicaState::Terminated)
                .count() as u32
        })
    }

    pub fn sensor_battery(&self, service: &str) -> Option<f64> {
        let now = self.now();
        self.services
            .get(service)
            .and_then(|rt| rt.sensor.as_ref())
            .map(|s| s.battery(now))
    }

    pub fn fault_mode(&self, replica: &str) -> Option<FaultMode> {
        self.replicas.get(replica).map(|r| r.fault.mode)
    }
}
