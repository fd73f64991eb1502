//! Static service descriptions and the small value types shared by the
//! managed system, the managing system and the trace schema.

use serde::{Deserialize, Serialize};

use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceKind {
    Sensor,
    External,
    Control,
    Actuator,
    Ui,
    Broker,
    Monitoring,
    Managing,
}

/// How much a consumer depends on one of its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criticality {
    /// The service cannot decide anything without it.
    Critical,
    /// Decisions still possible from the remaining inputs, at reduced quality.
    Contributory,
    /// Only shown to the user; missing values leave the service functional.
    Display,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequiredInput {
    pub topic: String,
    pub criticality: Criticality,
    /// Absence longer than this turns partial impact into full impact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalate_after_ms: Option<Millis>,
}

impl RequiredInput {
    pub fn new(topic: &str, criticality: Criticality) -> Self {
        Self {
            topic: topic.to_string(),
            criticality,
            escalate_after_ms: None,
        }
    }

    pub fn escalating(mut self, after: Millis) -> Self {
        self.escalate_after_ms = Some(after);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaPolicy {
    pub min_replicas: u32,
    pub max_replicas: u32,
    /// Requests per second one replica is sized for.
    pub capacity_rps: f64,
    /// Utilisation fraction of `capacity_rps` above which the autoscaler adds replicas.
    pub scale_up_threshold: f64,
    /// Most replicas added in one autoscaler step.
    pub max_scale_up_step: u32,
    /// Sustained low load required before each scale-down step.
    pub scale_down_cooldown_ms: Millis,
    /// Fraction of the current count kept by a single scale-down step.
    pub scale_down_keep_fraction: f64,
}

impl ReplicaPolicy {
    pub fn fixed() -> Self {
        Self {
            min_replicas: 1,
            max_replicas: 1,
            capacity_rps: 50.0,
            scale_up_threshold: 1.0,
            max_scale_up_step: 1,
            scale_down_cooldown_ms: 7 * crate::MINUTE,
            scale_down_keep_fraction: 0.1,
        }
    }

    /// Per-replica request rate above which scaling up triggers.
    pub fn scale_up_rate(&self) -> f64 {
        self.capacity_rps * self.scale_up_threshold
    }

    pub fn validate(&self, service: &str) -> crate::Result<()> {
        if self.min_replicas < 1 {
            return Err(crate::Error::config(
                format!("services.{service}.replica_policy.min_replicas"),
                "must be >= 1",
            ));
        }
        if self.min_replicas > self.max_replicas {
            return Err(crate::Error::config(
                format!("services.{service}.replica_policy"),
                "min_replicas must not exceed max_replicas",
            ));
        }
        if !(self.capacity_rps > 0.0) || !(self.scale_up_threshold > 0.0) {
            return Err(crate::Error::config(
                format!("services.{service}.replica_policy.capacity_rps"),
                "capacity and threshold must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.scale_down_keep_fraction) {
            return Err(crate::Error::config(
                format!("services.{service}.replica_policy.scale_down_keep_fraction"),
                "must lie in [0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorType {
    Temperature,
    Motion,
}

impl SensorType {
    pub fn topic(self) -> &'static str {
        match self {
            SensorType::Temperature => "sensor/temperature",
            SensorType::Motion => "sensor/motion",
        }
    }

    pub fn from_topic(topic: &str) -> Option<Self> {
        match topic {
            "sensor/temperature" => Some(SensorType::Temperature),
            "sensor/motion" => Some(SensorType::Motion),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SensorType::Temperature => "temperature",
            SensorType::Motion => "motion",
        }
    }
}

/// Ground-truth reading generator of a physical sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingModel {
    pub sensor_type: SensorType,
    /// Temperature: mean value in °C. Motion: probability of a motion event per reading.
    pub base: f64,
    /// Half-width of the uniform noise added to `base` (temperature only).
    pub noise_amplitude: f64,
    pub initial_battery: f64,
    /// Battery drain in percent per minute.
    pub drain_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub name: String,
    pub kind: ServiceKind,
    #[serde(default)]
    pub subscriptions: Vec<String>,
    #[serde(default)]
    pub publishes: Vec<String>,
    /// Publication period for periodic publishers; the refresh period for controls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<Millis>,
    #[serde(default)]
    pub required_inputs: Vec<RequiredInput>,
    pub replica_policy: ReplicaPolicy,
    /// Service time of one request on an idle replica.
    pub base_service_ms: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reading: Option<ReadingModel>,
}

impl ServiceSpec {
    pub fn is_sensor(&self) -> bool {
        self.kind == ServiceKind::Sensor
    }

    pub fn sensor_type(&self) -> Option<SensorType> {
        self.reading.as_ref().map(|r| r.sensor_type)
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.replica_policy.validate(&self.name)?;
        if self.period_ms == Some(0) {
            return Err(crate::Error::config(
                format!("services.{}.period_ms", self.name),
                "must be > 0",
            ));
        }
        if self.kind == ServiceKind::Sensor && self.reading.is_none() {
            return Err(crate::Error::config(
                format!("services.{}.reading", self.name),
                "sensors need a reading model",
            ));
        }
        if self.base_service_ms == 0 {
            return Err(crate::Error::config(
                format!("services.{}.base_service_ms", self.name),
                "must be > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicaState {
    Starting,
    Healthy,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FaultMode {
    #[default]
    None,
    ErroneousRealistic,
    ErroneousUnrealistic,
    ErroneousMixed,
}

/// Periodic communication delay: active for `delay_ms` at the start of every
/// `period_ms`, counted from `since`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedDelay {
    pub delay_ms: Millis,
    pub period_ms: Millis,
    pub since: Millis,
}

impl InjectedDelay {
    pub fn active_at(&self, t: Millis) -> bool {
        if t < self.since || self.period_ms == 0 {
            return false;
        }
        (t - self.since) % self.period_ms < self.delay_ms
    }

    pub fn extra_at(&self, t: Millis) -> Millis {
        if self.active_at(t) {
            self.delay_ms
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeatingState {
    On,
    #[default]
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LightLevel {
    #[default]
    Off,
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weather {
    Sunny,
    Cloudy,
    Rainy,
}

impl Weather {
    pub const ALL: [Weather; 3] = [Weather::Sunny, Weather::Cloudy, Weather::Rainy];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayBand {
    Morning,
    Afternoon,
    Evening,
    Night,
}

impl DayBand {
    pub const ALL: [DayBand; 4] = [
        DayBand::Morning,
        DayBand::Afternoon,
        DayBand::Evening,
        DayBand::Night,
    ];

    /// Band for a wall-clock time of day given in milliseconds since midnight.
    pub fn at(time_of_day_ms: Millis) -> Self {
        let hour = (time_of_day_ms / crate::MINUTE / 60) % 24;
        match hour {
            6..=11 => DayBand::Morning,
            12..=17 => DayBand::Afternoon,
            18..=21 => DayBand::Evening,
            _ => DayBand::Night,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationRule {
    pub band: DayBand,
    pub weather: Weather,
    pub level: LightLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPreferences {
    pub temp_min: f64,
    pub temp_max: f64,
    pub illumination: Vec<IlluminationRule>,
    pub light_timeout_ms: Millis,
    /// Weather assumed when the weather input is stale.
    pub fallback_weather: Weather,
}

impl UserPreferences {
    pub fn level_for(&self, band: DayBand, weather: Weather) -> Option<LightLevel> {
        self.illumination
            .iter()
            .find(|r| r.band == band && r.weather == weather)
            .map(|r| r.level)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.temp_min < self.temp_max) {
            return Err(crate::Error::config(
                "preferences.temp_min",
                "temp_min must be below temp_max",
            ));
        }
        if self.light_timeout_ms == 0 {
            return Err(crate::Error::config(
                "preferences.light_timeout_ms",
                "must be > 0",
            ));
        }
        for band in DayBand::ALL {
            for weather in Weather::ALL {
                if self.level_for(band, weather).is_none() {
                    return Err(crate::Error::config(
                        "preferences.illumination",
                        format!("missing level for {band:?}/{weather:?}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Default for UserPreferences {
    fn default() -> Self {
        use DayBand::*;
        use LightLevel::*;
        use Weather::*;
        let table = [
            (Morning, Sunny, Low),
            (Morning, Cloudy, Medium),
            (Morning, Rainy, Medium),
            (Afternoon, Sunny, Off),
            (Afternoon, Cloudy, Low),
            (Afternoon, Rainy, Medium),
            (Evening, Sunny, Medium),
            (Evening, Cloudy, High),
            (Evening, Rainy, High),
            (Night, Sunny, High),
            (Night, Cloudy, High),
            (Night, Rainy, High),
        ];
        Self {
            temp_min: 20.0,
            temp_max: 24.0,
            illumination: table
                .into_iter()
                .map(|(band, weather, level)| IlluminationRule {
                    band,
                    weather,
                    level,
                })
                .collect(),
            light_timeout_ms: 300 * crate::SECOND,
            fallback_weather: Weather::Cloudy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ActuatorState {
    pub heating: HeatingState,
    pub light: LightLevel,
    pub last_command_at: Option<Millis>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_episodes_repeat_every_period() {
        let d = InjectedDelay {
            delay_ms: 20_000,
            period_ms: 120_000,
            since: 1_000,
        };
        assert!(!d.active_at(999));
        assert!(d.active_at(1_000));
        assert!(d.active_at(20_999));
        assert!(!d.active_at(21_000));
        assert!(d.active_at(121_000));
        assert_eq!(d.extra_at(5_000), 20_000);
    }

    #[test]
    fn default_preferences_cover_every_band_and_condition() {
        UserPreferences::default().validate().unwrap();
    }

    #[test]
    fn policy_rejects_inverted_bounds() {
        let mut p = ReplicaPolicy::fixed();
        p.min_replicas = 3;
        p.max_replicas = 2;
        assert!(p.validate("x").is_err());
    }

    #[test]
    fn day_bands() {
        assert_eq!(DayBand::at(8 * 3_600_000), DayBand::Morning);
        assert_eq!(DayBand::at(13 * 3_600_000), DayBand::Afternoon);
        assert_eq!(DayBand::at(19 * 3_600_000), DayBand::Evening);
        assert_eq!(DayBand::at(23 * 3_600_000), DayBand::Night);
        assert_eq!(DayBand::at(2 * 3_600_000), DayBand::Night);
    }
}
