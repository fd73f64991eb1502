//! Application of chaos experiments to the running system.

use rand::Rng;

use super::{ActiveExperiment, Payload, World};
use crate::chaos::experiment::{ChaosExperiment, DrainMode, ExperimentParams};
use crate::chaos::model::{ChaosAction, ChaosLogEntry};
use crate::system::model::{FaultMode, InjectedDelay, ReplicaState};
use crate::system::sensor::FaultCursor;
use crate::trace::{Detail, EventKind};
use crate::{Millis, Result};

/// One scheduled step of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum InjectAction {
    Kill,
    SetFault { mode: FaultMode },
    ClearFault,
    Drain { mode: DrainMode },
    SetDelay { delay_ms: Millis, period_ms: Millis },
    ClearDelay,
}

impl World {
    /// Schedules every step of `exp` with injection starting at `at`.
    /// Returns the experiment's index in the chaos log bookkeeping.
    pub fn schedule_experiment(&mut self, exp: &ChaosExperiment, at: Millis) -> Result<usize> {
        exp.validate()?;
        let index = self.experiments.len();
        self.experiments.push(ActiveExperiment {
            id: exp.id.clone(),
            scenario: exp.scenario,
            targets: exp.targets.clone(),
            pods_killed: 0,
        });
        let end = at + exp.schedule.duration_ms;
        let mut steps: Vec<(Millis, InjectAction)> = Vec::new();
        match exp.parameters {
            ExperimentParams::ServiceDown { interval_ms } => {
                let mut t = at;
                while t < end {
                    steps.push((t, InjectAction::Kill));
                    t += interval_ms.max(1);
                }
            }
            ExperimentParams::SensorFault { mode } => {
                steps.push((at, InjectAction::SetFault { mode }));
                steps.push((end, InjectAction::ClearFault));
            }
            ExperimentParams::SensorDown { drain } => steps.push((at, InjectAction::Drain { mode: drain })),
            ExperimentParams::ServiceDelayed { delay_ms, period_ms } => {
                steps.push((at, InjectAction::SetDelay { delay_ms, period_ms }));
                steps.push((end, InjectAction::ClearDelay));
            }
        }
        for (t, action) in steps {
            self.kernel.schedule(
                t,
                "chaos-engine",
                EventKind::Injection,
                Payload::Inject {
                    experiment: index,
                    action,
                },
            )?;
        }
        Ok(index)
    }

    fn current_replicas(&self, service: &str) -> Vec<String> {
        self.services[service]
            .replicas
            .iter()
            .filter(|id| self.replicas[*id].state != ReplicaState::Terminated)
            .cloned()
            .collect()
    }

    pub(crate) fn on_inject(&mut self, experiment: usize, action: InjectAction) {
        let now = self.now();
        let Some(exp) = self.experiments.get(experiment) else { return };
        let (id, scenario, targets) = (exp.id.clone(), exp.scenario, exp.targets.clone());
        for target in targets {
            let applied = if !self.services.contains_key(&target) {
                ChaosAction::Aborted {
                    reason: format!("unknown target {target}"),
                }
            } else {
                self.apply(&target, &action, now)
            };
            if let ChaosAction::KillPods { killed } = applied {
                self.experiments[experiment].pods_killed += killed;
            }
            let entry = ChaosLogEntry {
                at: now,
                experiment: id.clone(),
                scenario,
                target: target.clone(),
                action: applied,
                pods_killed_total: self.experiments[experiment].pods_killed,
            };
            self.kernel
                .trace
                .push(now, "chaos-engine", target, Detail::Chaos(entry.clone()));
            self.chaos_log.push(entry);
        }
    }

    fn apply(&mut self, target: &str, action: &InjectAction, now: Millis) -> ChaosAction {
        let replicas = self.current_replicas(target);
        match action {
            InjectAction::Kill => {
                for r in &replicas {
                    self.terminate_replica(r);
                }
                ChaosAction::KillPods {
                    killed: replicas.len() as u32,
                }
            }
            InjectAction::SetFault { mode } => {
                if self.services[target].sensor.is_none() {
                    return ChaosAction::Aborted {
                        reason: format!("{target} is not a sensor"),
                    };
                }
                let unrealistic_first = *mode == FaultMode::ErroneousMixed && self.kernel.rng.get("chaos").gen_bool(0.5);
                for r in &replicas {
                    self.replicas.get_mut(r).expect("replica").fault = FaultCursor {
                        mode: *mode,
                        emitted: 0,
                        unrealistic_first,
                    };
                }
                ChaosAction::SetFaultMode {
                    mode: *mode,
                    replicas: replicas.len() as u32,
                }
            }
            InjectAction::ClearFault => {
                let mut cleared = 0;
                for r in &replicas {
                    let rep = self.replicas.get_mut(r).expect("replica");
                    if rep.fault.mode != FaultMode::None {
                        rep.fault = FaultCursor::default();
                        cleared += 1;
                    }
                }
                ChaosAction::ClearFaultMode { replicas: cleared }
            }
            InjectAction::Drain { mode } => {
                let Some(sensor) = self.services.get_mut(target).and_then(|rt| rt.sensor.as_mut()) else {
                    return ChaosAction::Aborted {
                        reason: format!("{target} has no battery"),
                    };
                };
                match mode {
                    DrainMode::Instant => sensor.set_battery(now, 0.0),
                    DrainMode::Rate { per_min } => sensor.set_drain(now, *per_min),
                }
                let battery = sensor.battery(now);
                let drain_per_min = sensor.drain_per_min;
                self.kernel.trace.push(
                    now,
                    "chaos-engine",
                    target,
                    Detail::Battery {
                        service: target.to_string(),
                        battery,
                        drain_per_min,
                        backup: false,
                    },
                );
                ChaosAction::DrainBattery { drain_per_min, battery }
            }
            InjectAction::SetDelay { delay_ms, period_ms } => {
                for r in &replicas {
                    self.replicas.get_mut(r).expect("replica").delay = Some(InjectedDelay {
                        delay_ms: *delay_ms,
                        period_ms: *period_ms,
                        since: now,
                    });
                }
                ChaosAction::SetDelay {
                    delay_ms: *delay_ms,
                    period_ms: *period_ms,
                    replicas: replicas.len() as u32,
                }
            }
            InjectAction::ClearDelay => {
                let mut cleared = 0;
                for r in &replicas {
                    if self.replicas.get_mut(r).expect("replica").delay.take().is_some() {
                        cleared += 1;
                    }
                }
                ChaosAction::ClearDelay { replicas: cleared }
            }
        }
    }
}
