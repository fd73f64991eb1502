//! Control rules of the heating and light services.

use crate::system::model::{DayBand, HeatingState, LightLevel, UserPreferences, Weather};
use crate::Millis;

/// Bang-bang heating with hold inside `[temp_min, temp_max]`.
///
/// `None` for a stale temperature: the service cannot decide.
pub fn heating_command(
    temp: Option<f64>,
    prefs: &UserPreferences,
    previous: HeatingState,
) -> Option<HeatingState> {
    let t = temp?;
    Some(if t < prefs.temp_min {
        HeatingState::On
    } else if t > prefs.temp_max {
        HeatingState::Off
    } else {
        previous
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightInputs {
    /// `None` when the motion input is stale.
    pub occupied: Option<bool>,
    /// `None` when the weather input is stale.
    pub weather: Option<Weather>,
    pub band: DayBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LightDecision {
    pub level: LightLevel,
    /// Computed from a strict subset of the inputs.
    pub degraded: bool,
}

/// Lights off when nobody has moved for the timeout; otherwise the
/// illumination table for the band and weather. Stale motion assumes
/// presence, stale weather uses the fallback condition.
pub fn light_command(inputs: LightInputs, prefs: &UserPreferences) -> LightDecision {
    let degraded = inputs.occupied.is_none() || inputs.weather.is_none();
    if inputs.occupied == Some(false) {
        return LightDecision {
            level: LightLevel::Off,
            degraded,
        };
    }
    let weather = inputs.weather.unwrap_or(prefs.fallback_weather);
    LightDecision {
        level: prefs.level_for(inputs.band, weather).unwrap_or(LightLevel::Medium),
        degraded,
    }
}

/// Occupancy from the last motion event, given a fresh motion input.
pub fn occupied(last_motion_at: Option<Millis>, now: Millis, timeout: Millis) -> bool {
    match last_motion_at {
        Some(t) => now.saturating_sub(t) <= timeout,
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prefs() -> UserPreferences {
        UserPreferences::default()
    }

    #[test]
    fn heating_examples() {
        let p = prefs();
        assert_eq!(heating_command(Some(18.0), &p, HeatingState::Off), Some(HeatingState::On));
        assert_eq!(heating_command(Some(26.0), &p, HeatingState::On), Some(HeatingState::Off));
        assert_eq!(heating_command(Some(22.0), &p, HeatingState::On), Some(HeatingState::On));
        assert_eq!(heating_command(None, &p, HeatingState::On), None);
    }

    #[test]
    fn stale_motion_is_degraded_but_emits() {
        let d = light_command(
            LightInputs {
                occupied: None,
                weather: Some(Weather::Sunny),
                band: DayBand::Morning,
            },
            &prefs(),
        );
        assert!(d.degraded);
        assert_eq!(d.level, LightLevel::Low);
    }

    #[test]
    fn no_motion_past_timeout_switches_off() {
        let p = prefs();
        assert!(!occupied(Some(0), p.light_timeout_ms + 1, p.light_timeout_ms));
        let d = light_command(
            LightInputs {
                occupied: Some(false),
                weather: Some(Weather::Cloudy),
                band: DayBand::Night,
            },
            &p,
        );
        assert_eq!(d.level, LightLevel::Off);
        assert!(!d.degraded);
    }

    #[test]
    fn fresh_inputs_follow_the_rule_table() {
        // Independent oracle: the table as written in the default preferences.
        let expected = [
            ("morning", "sunny", LightLevel::Low),
            ("morning", "cloudy", LightLevel::Medium),
            ("morning", "rainy", LightLevel::Medium),
            ("afternoon", "sunny", LightLevel::Off),
            ("afternoon", "cloudy", LightLevel::Low),
            ("afternoon", "rainy", LightLevel::Medium),
            ("evening", "sunny", LightLevel::Medium),
            ("evening", "cloudy", LightLevel::High),
            ("evening", "rainy", LightLevel::High),
            ("night", "sunny", LightLevel::High),
            ("night", "cloudy", LightLevel::High),
            ("night", "rainy", LightLevel::High),
        ];
        let p = prefs();
        for (band, weather, level) in expected {
            let band: DayBand = serde_json::from_str(&format!("\"{band}\"")).unwrap();
            let weather: Weather = serde_json::from_str(&format!("\"{weather}\"")).unwrap();
            let d = light_command(
                LightInputs {
                    occupied: Some(true),
                    weather: Some(weather),
                    band,
                },
                &p,
            );
            assert_eq!(d.level, level, "{band:?}/{weather:?}");
            assert!(!d.degraded);
        }
    }

    proptest! {
        #[test]
        fn heating_bounds_dominate_previous_state(
            t in -40.0f64..60.0,
            lo in 10.0f64..22.0,
            width in 0.5f64..8.0,
            prev_on in any::<bool>(),
        ) {
            let p = UserPreferences { temp_min: lo, temp_max: lo + width, ..UserPreferences::default() };
            let prev = if prev_on { HeatingState::On } else { HeatingState::Off };
            let cmd = heating_command(Some(t), &p, prev).unwrap();
            if t < p.temp_min { prop_assert_eq!(cmd, HeatingState::On); }
            else if t > p.temp_max { prop_assert_eq!(cmd, HeatingState::Off); }
            else { prop_assert_eq!(cmd, prev); }
        }

        #[test]
        fn degraded_iff_an_input_is_missing(occ in proptest::option::of(any::<bool>()), w in proptest::option::of(0usize..3), b in 0usize..4) {
            let inputs = LightInputs { occupied: occ, weather: w.map(|i| Weather::ALL[i]), band: DayBand::ALL[b] };
            let d = light_command(inputs, &prefs());
            prop_assert_eq!(d.degraded, occ.is_none() || w.is_none());
        }
    }
}
