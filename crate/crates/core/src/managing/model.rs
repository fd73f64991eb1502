use serde::{Deserialize, Serialize};

use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    Crash,
    ErroneousData,
    BatteryDrain,
    Delay,
}

/// Observable facts that triggered a detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Timestamp of the earliest observation contributing to the detection.
    pub earliest_at: Millis,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub id: u64,
    pub kind: FaultKind,
    pub service: String,
    pub detected_at: Millis,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryActionKind {
    DeployService,
    DeleteService,
    UpdateConfig,
    EnableBackupSensor,
    RaiseAlarm,
    TerminateAndReplace,
    Unsubscribe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryAction {
    pub kind: RecoveryActionKind,
    pub target: String,
    pub issued_at: Millis,
    pub fault_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub fault: Fault,
    pub root_cause: String,
    pub plan: Vec<RecoveryAction>,
}
