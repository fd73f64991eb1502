use serde::{Deserialize, Serialize};

use crate::system::model::FaultMode;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "FS1-service-down")]
    ServiceDown,
    #[serde(rename = "FS2-sensor-fault")]
    SensorFault,
    #[serde(rename = "FS3-sensor-down")]
    SensorDown,
    #[serde(rename = "FS4-service-delayed")]
    ServiceDelayed,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::ServiceDown,
        Scenario::SensorFault,
        Scenario::SensorDown,
        Scenario::ServiceDelayed,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Scenario::ServiceDown => "FS1",
            Scenario::SensorFault => "FS2",
            Scenario::SensorDown => "FS3",
            Scenario::ServiceDelayed => "FS4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.to_ascii_lowercase();
        Scenario::ALL.into_iter().find(|sc| {
            lower == sc.code().to_ascii_lowercase()
                || lower.starts_with(&format!("{}-", sc.code().to_ascii_lowercase()))
        })
    }

    /// Only sensor services can be targeted by the sensor scenarios.
    pub fn targets_sensors_only(self) -> bool {
        matches!(self, Scenario::SensorFault | Scenario::SensorDown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionLevel {
    Infrastructure,
    Functional,
    Both,
    /// Infrastructure, or functional as an alternative.
    InfrastructureOrFunctional,
}

impl InjectionLevel {
    pub fn for_scenario(s: Scenario) -> Self {
        match s {
            Scenario::ServiceDown => InjectionLevel::Infrastructure,
            Scenario::SensorFault => InjectionLevel::Both,
            Scenario::SensorDown => InjectionLevel::InfrastructureOrFunctional,
            Scenario::ServiceDelayed => InjectionLevel::Infrastructure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitoringSource {
    MonitoringTools,
    ChaosLogs,
    SystemSelfMonitoring,
}

impl MonitoringSource {
    pub fn required_for(s: Scenario) -> Vec<MonitoringSource> {
        use MonitoringSource::*;
        match s {
            Scenario::ServiceDown => vec![MonitoringTools, ChaosLogs],
            Scenario::SensorFault => vec![SystemSelfMonitoring],
            Scenario::SensorDown => vec![MonitoringTools, ChaosLogs, SystemSelfMonitoring],
            Scenario::ServiceDelayed => vec![MonitoringTools, ChaosLogs],
        }
    }
}

/// One perturbation (or its rollback) applied to the managed system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum ChaosAction {
    KillPods { killed: u32 },
    SetFaultMode { mode: FaultMode, replicas: u32 },
    ClearFaultMode { replicas: u32 },
    DrainBattery { drain_per_min: f64, battery: f64 },
    SetDelay { delay_ms: Millis, period_ms: Millis, replicas: u32 },
    ClearDelay { replicas: u32 },
    Aborted { reason: String },
}

impl ChaosAction {
    /// Rollbacks and aborts restore or leave state; everything else perturbs.
    pub fn is_perturbation(&self) -> bool {
        !matches!(
            self,
            ChaosAction::ClearFaultMode { .. }
                | ChaosAction::ClearDelay { .. }
                | ChaosAction::Aborted { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosLogEntry {
    pub at: Millis,
    pub experiment: String,
    pub scenario: Scenario,
    pub target: String,
    #[serde(flatten)]
    pub action: ChaosAction,
    /// Running total of pods killed by this experiment.
    pub pods_killed_total: u32,
}
