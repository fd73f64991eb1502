//! The declarative config document.
//!
//! One JSON document carries the service catalog, user preferences,
//! knowledge-base thresholds, chaos and evaluation settings and the workload
//! profile. Every section has embedded defaults, so `{}` is a valid config.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chaos::pool::FailureModelParams;
use crate::system::catalog::{self, default_catalog};
use crate::system::model::{SensorType, ServiceSpec, UserPreferences};
use crate::workload::LoadProfile;
use crate::{Error, Millis, Result, MINUTE, SECOND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Broker delivery delay when no per-topic override applies.
    pub broker_delay_ms: Millis,
    pub topic_delay_ms: BTreeMap<String, Millis>,
    /// Time a new replica spends in `starting` before serving.
    pub startup_latency_ms: Millis,
    pub monitor_tick_ms: Millis,
    pub autoscale_interval_ms: Millis,
    /// Trailing window over which the autoscaler measures arrival rate.
    pub load_window_ms: Millis,
    /// Input staleness window as a multiple of the publisher period.
    pub staleness_factor: u64,
    /// Wall-clock time of day at simulation start.
    pub day_start_ms: Millis,
    /// Requests whose projected latency exceeds this are rejected.
    pub latency_cap_ms: Millis,
    /// Chance per weather period that the condition changes.
    pub weather_change_prob: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            broker_delay_ms: 10,
            topic_delay_ms: BTreeMap::new(),
            startup_latency_ms: 2 * SECOND,
            monitor_tick_ms: SECOND,
            autoscale_interval_ms: 10 * SECOND,
            load_window_ms: 10 * SECOND,
            staleness_factor: 3,
            day_start_ms: 8 * 60 * MINUTE,
            latency_cap_ms: 30 * SECOND,
            weather_change_prob: 0.1,
        }
    }
}

impl SimSettings {
    pub fn delivery_delay(&self, topic: &str) -> Millis {
        self.topic_delay_ms
            .get(topic)
            .copied()
            .unwrap_or(self.broker_delay_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibleRange {
    pub lo: f64,
    pub hi: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnowledgeSettings {
    pub ranges: BTreeMap<SensorType, PlausibleRange>,
    /// Consecutive failed probes that count as a crash.
    pub crash_probe_threshold: u32,
    pub rejection_threshold: u32,
    pub rejection_window_ms: Millis,
    pub battery_alarm_pct: f64,
    pub delay_threshold_ms: Millis,
    pub delay_window_ms: Millis,
    /// Crash faults on one service within the window that trigger autoscaling.
    pub recurring_crash_count: u32,
    pub recurring_crash_window_ms: Millis,
    /// Minimum replicas set by the recurring-crash config update.
    pub escalated_min_replicas: u32,
    /// Backup sensors available per sensor service.
    pub backup_sensors: BTreeMap<String, u32>,
}

impl Default for KnowledgeSettings {
    fn default() -> Self {
        let mut ranges = BTreeMap::new();
        ranges.insert(
            SensorType::Temperature,
            PlausibleRange {
                lo: -40.0,
                hi: 60.0,
                unit: "°C".into(),
            },
        );
        ranges.insert(
            SensorType::Motion,
            PlausibleRange {
                lo: 0.0,
                hi: 1.0,
                unit: "event".into(),
            },
        );
        let mut backup_sensors = BTreeMap::new();
        backup_sensors.insert(catalog::TEMPERATURE_SENSOR.to_string(), 1);
        backup_sensors.insert(catalog::MOTION_SENSOR.to_string(), 1);
        Self {
            ranges,
            crash_probe_threshold: 3,
            rejection_threshold: 3,
            rejection_window_ms: 30 * SECOND,
            battery_alarm_pct: 10.0,
            delay_threshold_ms: 5 * SECOND,
            delay_window_ms: 60 * SECOND,
            recurring_crash_count: 2,
            recurring_crash_window_ms: 10 * MINUTE,
            escalated_min_replicas: 2,
            backup_sensors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregate {
    Min,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub snapshot_cadence_ms: Millis,
    pub snapshot_window_ms: Millis,
    /// Blast-radius window; `None` means twice the longest publisher period.
    pub impact_window_ms: Option<Millis>,
    pub impact_step_ms: Millis,
    pub prolonged_outage_ms: Millis,
    pub availability_aggregate: Aggregate,
    pub fraction_tolerance: f64,
    pub latency_tolerance: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            snapshot_cadence_ms: 10 * SECOND,
            snapshot_window_ms: 10 * SECOND,
            impact_window_ms: None,
            impact_step_ms: SECOND,
            prolonged_outage_ms: catalog::PROLONGED_OUTAGE,
            availability_aggregate: Aggregate::Min,
            fraction_tolerance: 0.01,
            latency_tolerance: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChaosSettings {
    pub failure_model: FailureModelParams,
    pub feedback_boost: f64,
    pub max_concurrent_experiments: u32,
    /// Realistic false readings sit this many noise amplitudes from the truth.
    pub realistic_offset: (f64, f64),
    /// Unrealistic readings sit this far outside the plausible range.
    pub unrealistic_margin: (f64, f64),
    /// Default FS-1 kill repetition interval.
    pub kill_interval_ms: Millis,
    pub delay_ms: Millis,
    pub delay_period_ms: Millis,
    pub drain_per_min: f64,
}

impl Default for ChaosSettings {
    fn default() -> Self {
        Self {
            failure_model: FailureModelParams::default(),
            feedback_boost: 1.5,
            max_concurrent_experiments: 1,
            realistic_offset: (2.0, 5.0),
            unrealistic_margin: (5.0, 50.0),
            kill_interval_ms: 10 * SECOND,
            delay_ms: 20 * SECOND,
            delay_period_ms: 2 * MINUTE,
            drain_per_min: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleSettings {
    /// Clean run time before the experiment starts.
    pub warmup_ms: Millis,
    /// Baseline window ending at the injection; must fit in the warm-up.
    pub before_window_ms: Millis,
    /// Gap between the end of the injection and the after-phase window.
    pub settle_ms: Millis,
    pub after_window_ms: Millis,
    /// Self-healing layer (validation, detection, recovery) on or off.
    pub recovery: bool,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self {
            warmup_ms: 60 * SECOND,
            before_window_ms: 40 * SECOND,
            settle_ms: 60 * SECOND,
            after_window_ms: 60 * SECOND,
            recovery: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub sim: SimSettings,
    pub services: Vec<ServiceSpec>,
    pub preferences: UserPreferences,
    pub knowledge: KnowledgeSettings,
    pub evaluation: EvalSettings,
    pub chaos: ChaosSettings,
    pub workload: LoadProfile,
    pub cycle: CycleSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            sim: SimSettings::default(),
            services: default_catalog(),
            preferences: UserPreferences::default(),
            knowledge: KnowledgeSettings::default(),
            evaluation: EvalSettings::default(),
            chaos: ChaosSettings::default(),
            workload: LoadProfile::default(),
            cycle: CycleSettings::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.name == name)
    }

    /// Staleness window for input `topic`.
    pub fn staleness(&self, topic: &str) -> Millis {
        catalog::topic_period(&self.services, topic)
            .map(|p| p * self.sim.staleness_factor)
            .unwrap_or(self.sim.staleness_factor * self.sim.monitor_tick_ms)
    }

    pub fn max_publisher_period(&self) -> Millis {
        self.services
            .iter()
            .filter(|s| !s.publishes.is_empty())
            .filter_map(|s| s.period_ms)
            .max()
            .unwrap_or(SECOND)
    }

    pub fn impact_window(&self) -> Millis {
        self.evaluation
            .impact_window_ms
            .unwrap_or(2 * self.max_publisher_period())
    }

    pub fn validate(&self) -> Result<()> {
        if self.services.is_empty() {
            return Err(Error::config("services", "catalog is empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.services {
            s.validate()?;
            if !seen.insert(s.name.as_str()) {
                return Err(Error::config(format!("services.{}", s.name), "duplicate name"));
            }
        }
        if !self.services.iter().any(|s| s.kind == crate::system::model::ServiceKind::Broker) {
            return Err(Error::config("services", "catalog needs a broker service"));
        }
        self.preferences.validate()?;
        for (ty, r) in &self.knowledge.ranges {
            if !(r.lo < r.hi) {
                return Err(Error::config(
                    format!("knowledge.ranges.{}", ty.label()),
                    "lo must be below hi",
                ));
            }
        }
        for s in &self.services {
            for input in &s.required_inputs {
                if catalog::topic_publisher(&self.services, &input.topic).is_none() {
                    return Err(Error::config(
                        format!("services.{}.required_inputs", s.name),
                        format!("no service publishes {}", input.topic),
                    ));
                }
            }
        }
        if self.sim.monitor_tick_ms == 0 || self.sim.autoscale_interval_ms == 0 {
            return Err(Error::config("sim", "tick intervals must be > 0"));
        }
        if self.sim.staleness_factor == 0 {
            return Err(Error::config("sim.staleness_factor", "must be > 0"));
        }
        if self.evaluation.snapshot_cadence_ms == 0 || self.evaluation.impact_step_ms == 0 {
            return Err(Error::config("evaluation", "cadences must be > 0"));
        }
        if !(self.chaos.feedback_boost > 0.0) {
            return Err(Error::config("chaos.feedback_boost", "must be positive"));
        }
        if self.cycle.before_window_ms == 0 || self.cycle.before_window_ms > self.cycle.warmup_ms {
            return Err(Error::config(
                "cycle.before_window_ms",
                "must be positive and fit in the warm-up",
            ));
        }
        if self.cycle.after_window_ms == 0 {
            return Err(Error::config("cycle.after_window_ms", "must be > 0"));
        }
        self.chaos.failure_model.validate()?;
        self.workload.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_defaults() {
        let cfg = Config::from_json("{}").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.staleness(catalog::TOPIC_TEMPERATURE), 6 * SECOND);
        assert_eq!(cfg.staleness(catalog::TOPIC_WEATHER), 90 * SECOND);
        assert_eq!(cfg.impact_window(), 60 * SECOND);
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        assert_eq!(Config::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn invalid_field_is_named() {
        let err = Config::from_json(r#"{"preferences": {"temp_min": 25.0, "temp_max": 20.0, "illumination": [], "light_timeout_ms": 1, "fallback_weather": "cloudy"}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("preferences.temp_min"), "{err}");
    }
}
