//! Knowledge base shared by the MAPE-K stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{Config, KnowledgeSettings, PlausibleRange};
use crate::system::model::{RequiredInput, SensorType, ServiceKind};
use crate::trace::ValidationCode;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub settings: KnowledgeSettings,
    /// Service to the inputs it requires.
    pub dependencies: BTreeMap<String, Vec<RequiredInput>>,
    pub kinds: BTreeMap<String, ServiceKind>,
    /// Topic to its publishing service.
    pub publishers: BTreeMap<String, String>,
    /// Service to its publication period, for periodic publishers.
    pub periods: BTreeMap<String, Millis>,
    /// Topic to its staleness window.
    pub staleness: BTreeMap<String, Millis>,
    pub monitor_tick_ms: Millis,
    pub startup_latency_ms: Millis,
}

impl KnowledgeBase {
    pub fn from_config(cfg: &Config) -> Self {
        let mut publishers = BTreeMap::new();
        let mut staleness = BTreeMap::new();
        let mut periods = BTreeMap::new();
        for s in &cfg.services {
            for t in &s.publishes {
                publishers.insert(t.clone(), s.name.clone());
                staleness.insert(t.clone(), cfg.staleness(t));
            }
            if let Some(p) = s.period_ms {
                periods.insert(s.name.clone(), p);
            }
        }
        Self {
            settings: cfg.knowledge.clone(),
            dependencies: cfg
                .services
                .iter()
                .map(|s| (s.name.clone(), s.required_inputs.clone()))
                .collect(),
            kinds: cfg.services.iter().map(|s| (s.name.clone(), s.kind)).collect(),
            publishers,
            periods,
            staleness,
            monitor_tick_ms: cfg.sim.monitor_tick_ms,
            startup_latency_ms: cfg.sim.startup_latency_ms,
        }
    }

    pub fn range(&self, sensor: SensorType) -> Option<&PlausibleRange> {
        self.settings.ranges.get(&sensor)
    }

    /// Range check with inclusive bounds.
    pub fn validate_reading(&self, sensor: Option<SensorType>, value: f64) -> ValidationCode {
        match sensor.and_then(|s| self.range(s)) {
            None => ValidationCode::UnknownSensorType,
            Some(r) if value >= r.lo && value <= r.hi => ValidationCode::Accepted,
            Some(_) => ValidationCode::OutOfRange,
        }
    }

    /// Staleness window of the topics a service publishes.
    pub fn output_staleness(&self, service: &str) -> Option<Millis> {
        self.publishers
            .iter()
            .filter(|(_, s)| s.as_str() == service)
            .filter_map(|(t, _)| self.staleness.get(t).copied())
            .max()
    }

    pub fn backups_for(&self, service: &str) -> u32 {
        self.settings.backup_sensors.get(service).copied().unwrap_or(0)
    }

    /// Every service named as a publisher or consumer is in the graph.
    pub fn is_complete(&self) -> bool {
        self.publishers.values().all(|s| self.dependencies.contains_key(s))
            && self
                .settings
                .ranges
                .values()
                .all(|r| r.lo < r.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::from_config(&Config::default())
    }

    #[test]
    fn validator_examples() {
        let kb = kb();
        let t = Some(SensorType::Temperature);
        assert_eq!(kb.validate_reading(t, 250.0), ValidationCode::OutOfRange);
        assert_eq!(kb.validate_reading(t, 22.5), ValidationCode::Accepted);
        assert_eq!(kb.validate_reading(t, 60.0), ValidationCode::Accepted);
        assert_eq!(kb.validate_reading(t, -40.0), ValidationCode::Accepted);
        assert_eq!(kb.validate_reading(None, 1.0), ValidationCode::UnknownSensorType);
    }

    #[test]
    fn graph_covers_every_service() {
        let kb = kb();
        assert!(kb.is_complete());
        assert_eq!(kb.dependencies.len(), Config::default().services.len());
        assert_eq!(kb.backups_for("temperature-sensor"), 1);
    }

    proptest! {
        #[test]
        fn rejected_iff_outside_range(v in -200.0f64..200.0) {
            let code = kb().validate_reading(Some(SensorType::Temperature), v);
            let inside = (-40.0..=60.0).contains(&v);
            prop_assert_eq!(code == ValidationCode::Accepted, inside);
        }
    }
}
