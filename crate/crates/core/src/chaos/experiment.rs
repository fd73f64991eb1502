//! Chaos experiment documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chaos::hypothesis::SteadyStateHypothesis;
use crate::chaos::model::{InjectionLevel, MonitoringSource, Scenario};
use crate::system::model::FaultMode;
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "drain", rename_all = "kebab-case")]
pub enum DrainMode {
    /// Battery drains at this many percent per minute.
    Rate { per_min: f64 },
    /// Battery set to zero at once.
    Instant,
}

/// Scenario-specific knobs of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentParams {
    /// Terminate every pod of each target, repeated every `interval_ms`.
    ServiceDown { interval_ms: Millis },
    SensorFault { mode: FaultMode },
    SensorDown { drain: DrainMode },
    /// Delay active for `delay_ms` at the start of every `period_ms`.
    ServiceDelayed { delay_ms: Millis, period_ms: Millis },
}

impl ExperimentParams {
    pub fn scenario(&self) -> Scenario {
        match self {
            ExperimentParams::ServiceDown { .. } => Scenario::ServiceDown,
            ExperimentParams::SensorFault { .. } => Scenario::SensorFault,
            ExperimentParams::SensorDown { .. } => Scenario::SensorDown,
            ExperimentParams::ServiceDelayed { .. } => Scenario::ServiceDelayed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Offset from the end of the warm-up at which injection starts.
    pub start_ms: Millis,
    /// Injected downtime.
    pub duration_ms: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ChaosExperiment {
    pub id: String,
    pub title: String,
    pub scenario: Scenario,
    pub targets: Vec<String>,
    pub parameters: ExperimentParams,
    pub steady_state_hypothesis: SteadyStateHypothesis,
    pub schedule: Schedule,
    pub injection_level: InjectionLevel,
    pub monitoring_sources: Vec<MonitoringSource>,
}

impl ChaosExperiment {
    /// Builds an experiment with annotations derived from its scenario.
    pub fn new(
        id: impl Into<String>,
        targets: Vec<String>,
        parameters: ExperimentParams,
        hypothesis: SteadyStateHypothesis,
        schedule: Schedule,
    ) -> Self {
        let scenario = parameters.scenario();
        let id = id.into();
        let title = format!("{} on {}", scenario.code(), targets.join("+"));
        Self {
            id,
            title,
            scenario,
            targets,
            parameters,
            steady_state_hypothesis: hypothesis,
            schedule,
            injection_level: InjectionLevel::for_scenario(scenario),
            monitoring_sources: MonitoringSource::required_for(scenario),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let exp: ChaosExperiment = serde_json::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.parameters.scenario() != self.scenario {
            return Err(Error::config(
                format!("experiment {}.parameters", self.id),
                "parameters do not match the scenario",
            ));
        }
        if self.targets.is_empty() {
            return Err(Error::config(format!("experiment {}.targets", self.id), "no targets"));
        }
        if self.schedule.duration_ms == 0 {
            return Err(Error::config(
                format!("experiment {}.schedule.duration_ms", self.id),
                "must be > 0",
            ));
        }
        match self.parameters {
            ExperimentParams::ServiceDown { interval_ms: 0 } => Err(Error::config(
                format!("experiment {}.parameters.interval_ms", self.id),
                "must be > 0",
            )),
            ExperimentParams::ServiceDelayed { delay_ms, period_ms }
                if period_ms == 0 || delay_ms == 0 || delay_ms > period_ms =>
            {
                Err(Error::config(
                    format!("experiment {}.parameters", self.id),
                    "need 0 < delay_ms <= period_ms",
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn end_offset(&self) -> Millis {
        self.schedule.start_ms + self.schedule.duration_ms
    }
}
