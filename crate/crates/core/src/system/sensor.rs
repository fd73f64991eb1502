use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::system::model::{FaultMode, ReadingModel, SensorType};
use crate::{Millis, MINUTE};

/// Battery and backup state of one physical sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorState {
    pub model: ReadingModel,
    battery: f64,
    battery_at: Millis,
    pub drain_per_min: f64,
    pub backups_available: u32,
    pub on_backup: bool,
}

impl SensorState {
    pub fn new(model: ReadingModel, backups: u32) -> Self {
        Self {
            battery: model.initial_battery.clamp(0.0, 100.0),
            battery_at: 0,
            drain_per_min: model.drain_per_min,
            backups_available: backups,
            on_backup: false,
            model,
        }
    }

    pub fn battery(&self, now: Millis) -> f64 {
        let elapsed_min = now.saturating_sub(self.battery_at) as f64 / MINUTE as f64;
        (self.battery - self.drain_per_min * elapsed_min).max(0.0)
    }

    pub fn set_drain(&mut self, now: Millis, drain_per_min: f64) {
        self.battery = self.battery(now);
        self.battery_at = now;
        self.drain_per_min = drain_per_min.max(0.0);
    }

    pub fn set_battery(&mut self, now: Millis, level: f64) {
        self.battery = level.clamp(0.0, 100.0);
        self.battery_at = now;
    }

    /// A drained sensor emits nothing.
    pub fn idle(&self, now: Millis) -> bool {
        self.battery(now) <= 0.0
    }

    /// Switches to a fresh backup device; false when none is registered.
    pub fn switch_to_backup(&mut self, now: Millis) -> bool {
        if self.backups_available == 0 {
            return false;
        }
        self.backups_available -= 1;
        self.on_backup = true;
        self.battery = 100.0;
        self.battery_at = now;
        self.drain_per_min = self.model.drain_per_min;
        true
    }
}

/// Per-replica state of an injected sensor fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FaultCursor {
    pub mode: FaultMode,
    /// Readings emitted since the fault was set.
    pub emitted: u64,
    /// Mixed mode starts with an unrealistic reading when set.
    pub unrealistic_first: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultShape {
    pub lo: f64,
    pub hi: f64,
    pub realistic_offset: (f64, f64),
    pub unrealistic_margin: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub sensor: SensorType,
    pub value: f64,
    pub truth: f64,
    pub battery: f64,
}

impl Reading {
    pub fn is_false(&self) -> bool {
        self.value != self.truth
    }
}

pub fn true_value<R: Rng>(model: &ReadingModel, rng: &mut R) -> f64 {
    match model.sensor_type {
        SensorType::Temperature => {
            let a = model.noise_amplitude;
            if a > 0.0 {
                model.base + rng.gen_range(-a..=a)
            } else {
                model.base
            }
        }
        SensorType::Motion => {
            if rng.gen_bool(model.base.clamp(0.0, 1.0)) {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// A false value that stays inside the plausible range but departs from the truth.
pub fn realistic_false<R: Rng>(model: &ReadingModel, truth: f64, shape: &FaultShape, rng: &mut R) -> f64 {
    match model.sensor_type {
        SensorType::Motion => 1.0 - truth,
        SensorType::Temperature => {
            let amp = model.noise_amplitude.max(0.1);
            let (k_lo, k_hi) = shape.realistic_offset;
            let k = if k_hi > k_lo { rng.gen_range(k_lo..=k_hi) } else { k_lo };
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut v = (truth + sign * k * amp).clamp(shape.lo, shape.hi);
            if v == truth {
                v = (truth - sign * k * amp).clamp(shape.lo, shape.hi);
            }
            v
        }
    }
}

/// A value strictly outside the plausible range.
pub fn unrealistic<R: Rng>(shape: &FaultShape, rng: &mut R) -> f64 {
    let (m_lo, m_hi) = shape.unrealistic_margin;
    let m = if m_hi > m_lo { rng.gen_range(m_lo..=m_hi) } else { m_lo };
    let m = m.max(f64::EPSILON * shape.hi.abs().max(1.0) * 4.0);
    if rng.gen_bool(0.5) {
        shape.hi + m
    } else {
        shape.lo - m
    }
}

/// Reading for one period tick, or `None` when the sensor is drained or its
/// replica is not healthy.
pub fn emit_sensor_reading<R: Rng, F: Rng>(
    sensor: &SensorState,
    replica_healthy: bool,
    cursor: &mut FaultCursor,
    shape: &FaultShape,
    now: Millis,
    noise: &mut R,
    fault_rng: &mut F,
) -> Option<Reading> {
    if !replica_healthy || sensor.idle(now) {
        return None;
    }
    let truth = true_value(&sensor.model, noise);
    let value = match cursor.mode {
        FaultMode::None => truth,
        FaultMode::ErroneousRealistic => realistic_false(&sensor.model, truth, shape, fault_rng),
        FaultMode::ErroneousUnrealistic => unrealistic(shape, fault_rng),
        FaultMode::ErroneousMixed => {
            let unrealistic_turn = cursor.emitted.is_multiple_of(2) == cursor.unrealistic_first;
            if unrealistic_turn {
                unrealistic(shape, fault_rng)
            } else {
                realistic_false(&sensor.model, truth, shape, fault_rng)
            }
        }
    };
    if cursor.mode != FaultMode::None {
        cursor.emitted += 1;
    }
    Some(Reading {
        sensor: sensor.model.sensor_type,
        value,
        truth,
        battery: sensor.battery(now),
    })
}
