//! Plan stage: rule-based diagnosis of detected faults.

use std::collections::BTreeMap;

use crate::managing::knowledge::KnowledgeBase;
use crate::managing::model::{Diagnosis, Fault, FaultKind, RecoveryAction, RecoveryActionKind};
use crate::Millis;

/// Diagnosis state carried across faults: crash history and remaining
/// backup sensors.
#[derive(Debug, Clone, Default)]
pub struct Planner {
    crashes: BTreeMap<String, Vec<Millis>>,
    backups_used: BTreeMap<String, u32>,
}

impl Planner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn diagnose(&mut self, fault: &Fault, kb: &KnowledgeBase, now: Millis) -> Diagnosis {
        use RecoveryActionKind::*;
        let action = |kind| RecoveryAction {
            kind,
            target: fault.service.clone(),
            issued_at: now,
            fault_id: fault.id,
        };
        let (root_cause, plan) = match fault.kind {
            FaultKind::Crash => {
                let window = kb.settings.recurring_crash_window_ms;
                let history = self.crashes.entry(fault.service.clone()).or_default();
                history.retain(|&t| t + window > fault.detected_at);
                history.push(fault.detected_at);
                let mut plan = vec![action(DeployService)];
                if history.len() as u32 >= kb.settings.recurring_crash_count {
                    plan.push(action(UpdateConfig));
                    ("recurring service crash", plan)
                } else {
                    ("service crash", plan)
                }
            }
            FaultKind::ErroneousData => (
                "faulty sensing service",
                vec![action(Unsubscribe), action(DeleteService), action(DeployService)],
            ),
            FaultKind::BatteryDrain => {
                let used = self.backups_used.entry(fault.service.clone()).or_default();
                if *used < kb.backups_for(&fault.service) {
                    *used += 1;
                    ("sensor battery depleted", vec![action(RaiseAlarm), action(EnableBackupSensor)])
                } else {
                    ("sensor battery depleted, no backup left", vec![action(RaiseAlarm)])
                }
            }
            FaultKind::Delay => ("delayed service", vec![action(TerminateAndReplace)]),
        };
        Diagnosis {
            fault: fault.clone(),
            root_cause: root_cause.to_string(),
            plan,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::managing::model::Evidence;
    use crate::system::catalog::{HEATING_CONTROL, LIGHT_CONTROL, TEMPERATURE_SENSOR};
    use crate::MINUTE;
    use RecoveryActionKind::*;

    fn fault(id: u64, kind: FaultKind, service: &str, at: Millis) -> Fault {
        Fault {
            id,
            kind,
            service: service.into(),
            detected_at: at,
            evidence: Evidence {
                earliest_at: at,
                summary: String::new(),
            },
        }
    }

    fn kinds(d: &Diagnosis) -> Vec<RecoveryActionKind> {
        d.plan.iter().map(|a| a.kind).collect()
    }

    #[test]
    fn plans_per_fault_kind() {
        let kb = KnowledgeBase::from_config(&Config::default());
        let mut p = Planner::new();
        let d = p.diagnose(&fault(0, FaultKind::Crash, HEATING_CONTROL, 0), &kb, 0);
        assert_eq!(kinds(&d), vec![DeployService]);
        let d = p.diagnose(&fault(1, FaultKind::ErroneousData, TEMPERATURE_SENSOR, 0), &kb, 0);
        assert_eq!(kinds(&d), vec![Unsubscribe, DeleteService, DeployService]);
        let d = p.diagnose(&fault(2, FaultKind::BatteryDrain, TEMPERATURE_SENSOR, 0), &kb, 0);
        assert_eq!(kinds(&d), vec![RaiseAlarm, EnableBackupSensor]);
        let d = p.diagnose(&fault(3, FaultKind::BatteryDrain, TEMPERATURE_SENSOR, 0), &kb, 0);
        assert_eq!(kinds(&d), vec![RaiseAlarm]);
        let d = p.diagnose(&fault(4, FaultKind::Delay, LIGHT_CONTROL, 0), &kb, 0);
        assert_eq!(kinds(&d), vec![TerminateAndReplace]);
        assert!(d.plan.iter().all(|a| a.fault_id == 4 && a.target == LIGHT_CONTROL));
    }

    #[test]
    fn second_crash_within_window_escalates() {
        let kb = KnowledgeBase::from_config(&Config::default());
        let mut p = Planner::new();
        p.diagnose(&fault(0, FaultKind::Crash, HEATING_CONTROL, 0), &kb, 0);
        let d = p.diagnose(&fault(1, FaultKind::Crash, HEATING_CONTROL, 9 * MINUTE), &kb, 9 * MINUTE);
        assert_eq!(kinds(&d), vec![DeployService, UpdateConfig]);
        let mut p = Planner::new();
        p.diagnose(&fault(0, FaultKind::Crash, HEATING_CONTROL, 0), &kb, 0);
        let d = p.diagnose(&fault(1, FaultKind::Crash, HEATING_CONTROL, 11 * MINUTE), &kb, 11 * MINUTE);
        assert_eq!(kinds(&d), vec![DeployService]);
    }
}
