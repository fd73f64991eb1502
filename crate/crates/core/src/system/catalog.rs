//! The default smart-office service catalog.

use crate::system::model::{
    Criticality, ReadingModel, ReplicaPolicy, RequiredInput, SensorType, ServiceKind, ServiceSpec,
};
use crate::{Millis, MINUTE, SECOND};

pub const TEMPERATURE_SENSOR: &str = "temperature-sensor";
pub const MOTION_SENSOR: &str = "motion-sensor";
pub const EXTERNAL_WEATHER: &str = "external-weather";
pub const HEATING_CONTROL: &str = "heating-control";
pub const LIGHT_CONTROL: &str = "light-control";
pub const HEATING_ACTUATOR: &str = "heating-actuator";
pub const LIGHT_ACTUATOR: &str = "light-actuator";
pub const MQTT_BROKER: &str = "mqtt-broker";
pub const USER_INTERFACE: &str = "user-interface";
pub const SYSTEM_MONITORING: &str = "system-monitoring";
pub const SYSTEM_MANAGING: &str = "system-managing";

pub const TOPIC_TEMPERATURE: &str = "sensor/temperature";
pub const TOPIC_MOTION: &str = "sensor/motion";
pub const TOPIC_WEATHER: &str = "weather/current";
pub const TOPIC_HEATING_CMD: &str = "control/heating";
pub const TOPIC_LIGHT_CMD: &str = "control/light";
pub const TOPIC_HEATING_STATE: &str = "actuator/heating/state";
pub const TOPIC_LIGHT_STATE: &str = "actuator/light/state";
pub const TOPIC_FAULTS: &str = "shs/faults";

pub const SENSOR_PERIOD: Millis = 2 * SECOND;
pub const WEATHER_PERIOD: Millis = 30 * SECOND;
pub const COMMAND_REFRESH: Millis = 30 * SECOND;
pub const ACTUATOR_STATUS_PERIOD: Millis = 10 * SECOND;
pub const PROLONGED_OUTAGE: Millis = 5 * MINUTE;

/// The eight services the blast-radius study injects into, in row order.
pub const PUBLIC_SERVICES: [&str; 8] = [
    TEMPERATURE_SENSOR,
    MOTION_SENSOR,
    EXTERNAL_WEATHER,
    MQTT_BROKER,
    HEATING_CONTROL,
    LIGHT_CONTROL,
    HEATING_ACTUATOR,
    LIGHT_ACTUATOR,
];

/// Services shown as columns of a blast-radius matrix.
pub const OBSERVED_SERVICES: [&str; 9] = [
    TEMPERATURE_SENSOR,
    MOTION_SENSOR,
    EXTERNAL_WEATHER,
    MQTT_BROKER,
    HEATING_CONTROL,
    LIGHT_CONTROL,
    HEATING_ACTUATOR,
    LIGHT_ACTUATOR,
    USER_INTERFACE,
];

fn spec(name: &str, kind: ServiceKind) -> ServiceSpec {
    ServiceSpec {
        name: name.to_string(),
        kind,
        subscriptions: Vec::new(),
        publishes: Vec::new(),
        period_ms: None,
        required_inputs: Vec::new(),
        replica_policy: ReplicaPolicy::fixed(),
        base_service_ms: 20,
        reading: None,
    }
}

pub fn default_catalog() -> Vec<ServiceSpec> {
    use Criticality::*;

    let mut temperature = spec(TEMPERATURE_SENSOR, ServiceKind::Sensor);
    temperature.publishes = vec![TOPIC_TEMPERATURE.into()];
    temperature.period_ms = Some(SENSOR_PERIOD);
    temperature.reading = Some(ReadingModel {
        sensor_type: SensorType::Temperature,
        base: 20.5,
        noise_amplitude: 0.5,
        initial_battery: 80.0,
        drain_per_min: 0.01,
    });

    let mut motion = spec(MOTION_SENSOR, ServiceKind::Sensor);
    motion.publishes = vec![TOPIC_MOTION.into()];
    motion.period_ms = Some(SENSOR_PERIOD);
    motion.reading = Some(ReadingModel {
        sensor_type: SensorType::Motion,
        base: 0.4,
        noise_amplitude: 0.0,
        initial_battery: 85.0,
        drain_per_min: 0.01,
    });

    let mut weather = spec(EXTERNAL_WEATHER, ServiceKind::External);
    weather.publishes = vec![TOPIC_WEATHER.into()];
    weather.period_ms = Some(WEATHER_PERIOD);

    let mut heating = spec(HEATING_CONTROL, ServiceKind::Control);
    heating.subscriptions = vec![format!("{TOPIC_TEMPERATURE}/#"), TOPIC_HEATING_STATE.into()];
    heating.publishes = vec![TOPIC_HEATING_CMD.into()];
    heating.period_ms = Some(COMMAND_REFRESH);
    heating.required_inputs = vec![
        RequiredInput::new(TOPIC_TEMPERATURE, Critical),
        RequiredInput::new(TOPIC_HEATING_STATE, Contributory).escalating(PROLONGED_OUTAGE),
    ];

    let mut light = spec(LIGHT_CONTROL, ServiceKind::Control);
    light.subscriptions = vec![
        TOPIC_MOTION.into(),
        TOPIC_WEATHER.into(),
        TOPIC_LIGHT_STATE.into(),
    ];
    light.publishes = vec![TOPIC_LIGHT_CMD.into()];
    light.period_ms = Some(COMMAND_REFRESH);
    light.required_inputs = vec![
        RequiredInput::new(TOPIC_MOTION, Contributory),
        RequiredInput::new(TOPIC_WEATHER, Contributory),
        RequiredInput::new(TOPIC_LIGHT_STATE, Contributory).escalating(PROLONGED_OUTAGE),
    ];
    light.base_service_ms = 250;
    light.replica_policy = ReplicaPolicy {
        min_replicas: 1,
        max_replicas: 20,
        capacity_rps: 4.0,
        scale_up_threshold: 0.6,
        max_scale_up_step: 4,
        scale_down_cooldown_ms: 7 * MINUTE,
        scale_down_keep_fraction: 0.1,
    };

    let mut heating_act = spec(HEATING_ACTUATOR, ServiceKind::Actuator);
    heating_act.subscriptions = vec![TOPIC_HEATING_CMD.into()];
    heating_act.publishes = vec![TOPIC_HEATING_STATE.into()];
    heating_act.period_ms = Some(ACTUATOR_STATUS_PERIOD);
    heating_act.required_inputs = vec![RequiredInput::new(TOPIC_HEATING_CMD, Critical)];

    let mut light_act = spec(LIGHT_ACTUATOR, ServiceKind::Actuator);
    light_act.subscriptions = vec![TOPIC_LIGHT_CMD.into()];
    light_act.publishes = vec![TOPIC_LIGHT_STATE.into()];
    light_act.period_ms = Some(ACTUATOR_STATUS_PERIOD);
    light_act.required_inputs = vec![RequiredInput::new(TOPIC_LIGHT_CMD, Critical)];

    let broker = spec(MQTT_BROKER, ServiceKind::Broker);

    let mut ui = spec(USER_INTERFACE, ServiceKind::Ui);
    ui.subscriptions = vec![
        "sensor/#".into(),
        "weather/#".into(),
        "control/#".into(),
        "actuator/#".into(),
    ];
    ui.required_inputs = [
        TOPIC_TEMPERATURE,
        TOPIC_MOTION,
        TOPIC_WEATHER,
        TOPIC_HEATING_CMD,
        TOPIC_LIGHT_CMD,
        TOPIC_HEATING_STATE,
        TOPIC_LIGHT_STATE,
    ]
    .iter()
    .map(|t| RequiredInput::new(t, Display))
    .collect();

    let mut monitoring = spec(SYSTEM_MONITORING, ServiceKind::Monitoring);
    monitoring.subscriptions = vec!["sensor/#".into(), "weather/#".into(), "control/#".into(), "actuator/#".into()];
    monitoring.publishes = vec![TOPIC_FAULTS.into()];

    let mut managing = spec(SYSTEM_MANAGING, ServiceKind::Managing);
    managing.subscriptions = vec![TOPIC_FAULTS.into()];

    vec![
        temperature,
        motion,
        weather,
        heating,
        light,
        heating_act,
        light_act,
        broker,
        ui,
        monitoring,
        managing,
    ]
}

/// Publisher period of `topic` in `catalog`, if a periodic publisher owns it.
pub fn topic_period(catalog: &[ServiceSpec], topic: &str) -> Option<Millis> {
    catalog
        .iter()
        .find(|s| s.publishes.iter().any(|p| p == topic))
        .and_then(|s| s.period_ms)
}

pub fn topic_publisher<'a>(catalog: &'a [ServiceSpec], topic: &str) -> Option<&'a ServiceSpec> {
    catalog.iter().find(|s| s.publishes.iter().any(|p| p == topic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn catalog_has_exactly_the_smart_office_services() {
        let names: BTreeSet<_> = default_catalog().into_iter().map(|s| s.name).collect();
        let expected: BTreeSet<String> = [
            TEMPERATURE_SENSOR,
            MOTION_SENSOR,
            EXTERNAL_WEATHER,
            HEATING_CONTROL,
            LIGHT_CONTROL,
            HEATING_ACTUATOR,
            LIGHT_ACTUATOR,
            MQTT_BROKER,
            USER_INTERFACE,
            SYSTEM_MONITORING,
            SYSTEM_MANAGING,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(names, expected);
        for s in default_catalog() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn every_required_input_has_a_periodic_publisher() {
        let cat = default_catalog();
        for s in &cat {
            for input in &s.required_inputs {
                assert!(topic_period(&cat, &input.topic).is_some(), "{}", input.topic);
            }
        }
    }
}
