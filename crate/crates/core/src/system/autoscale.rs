use serde::{Deserialize, Serialize};

use crate::system::model::ReplicaPolicy;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AutoscalerState {
    /// Start of the current stretch of load below the current replica count.
    pub low_since: Option<Millis>,
    pub last_scale_at: Option<Millis>,
}

pub fn desired_replicas(policy: &ReplicaPolicy, load_rps: f64) -> u32 {
    let raw = (load_rps / policy.scale_up_rate()).ceil();
    let raw = if raw.is_finite() && raw > 0.0 { raw as u32 } else { 0 };
    raw.clamp(policy.min_replicas, policy.max_replicas)
}

/// Replica delta for one autoscaler evaluation.
///
/// Scale-up is immediate and bounded by `max_scale_up_step`. Scale-down waits
/// for a full cooldown of sustained low load (and a cooldown since the last
/// scaling action), then keeps `ceil(current * keep_fraction)` replicas at
/// least, so a large fleet steps down in stages.
pub fn autoscale_step(
    policy: &ReplicaPolicy,
    current: u32,
    load_rps: f64,
    now: Millis,
    state: &mut AutoscalerState,
) -> i64 {
    if current < policy.min_replicas {
        state.last_scale_at = Some(now);
        state.low_since = None;
        return policy.min_replicas as i64 - current as i64;
    }
    if current > policy.max_replicas {
        state.last_scale_at = Some(now);
        state.low_since = None;
        return policy.max_replicas as i64 - current as i64;
    }
    let desired = desired_replicas(policy, load_rps);
    if desired > current {
        state.low_since = None;
        state.last_scale_at = Some(now);
        return (desired - current).min(policy.max_scale_up_step.max(1)) as i64;
    }
    if desired == current {
        state.low_since = None;
        return 0;
    }
    let since = *state.low_since.get_or_insert(now);
    let cooled = now - since >= policy.scale_down_cooldown_ms
        && state
            .last_scale_at
            .is_none_or(|t| now - t >= policy.scale_down_cooldown_ms);
    if !cooled {
        return 0;
    }
    let keep = (current as f64 * policy.scale_down_keep_fraction).ceil() as u32;
    let target = desired.max(keep).max(policy.min_replicas);
    state.low_since = None;
    if target < current {
        state.last_scale_at = Some(now);
    }
    target as i64 - current as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{MINUTE, SECOND};
    use proptest::prelude::*;

    fn policy() -> ReplicaPolicy {
        ReplicaPolicy {
            min_replicas: 1,
            max_replicas: 20,
            capacity_rps: 4.0,
            scale_up_threshold: 0.6,
            max_scale_up_step: 4,
            scale_down_cooldown_ms: 7 * MINUTE,
            scale_down_keep_fraction: 0.1,
        }
    }

    #[test]
    fn constant_low_load_is_a_no_op() {
        let mut st = AutoscalerState::default();
        for i in 0..10 {
            assert_eq!(autoscale_step(&policy(), 1, 1.0, i * 10 * SECOND, &mut st), 0);
        }
    }

    #[test]
    fn peak_load_reaches_exactly_the_maximum() {
        let p = policy();
        let mut st = AutoscalerState::default();
        let mut n = 1u32;
        for i in 0..50 {
            n = (n as i64 + autoscale_step(&p, n, 200.0, i * 10 * SECOND, &mut st)) as u32;
        }
        assert_eq!(n, 20);
    }

    #[test]
    fn scale_down_holds_through_cooldown_then_steps() {
        let p = policy();
        let mut st = AutoscalerState {
            low_since: None,
            last_scale_at: Some(0),
        };
        let mut n = 20u32;
        let mut history = Vec::new();
        let mut t = 0;
        while t <= 20 * MINUTE {
            n = (n as i64 + autoscale_step(&p, n, 0.5, t, &mut st)) as u32;
            history.push((t, n));
            t += 10 * SECOND;
        }
        let at = |time: Millis| history.iter().rev().find(|(t, _)| *t <= time).unwrap().1;
        assert_eq!(at(6 * MINUTE), 20);
        assert_eq!(at(7 * MINUTE), 2);
        assert_eq!(at(13 * MINUTE), 2);
        assert_eq!(at(15 * MINUTE), 1);
    }

    proptest! {
        #[test]
        fn count_stays_within_bounds(loads in proptest::collection::vec(0.0f64..200.0, 1..80)) {
            let p = policy();
            let mut st = AutoscalerState::default();
            let mut n = 1u32;
            for (i, l) in loads.iter().enumerate() {
                n = (n as i64 + autoscale_step(&p, n, *l, i as u64 * 10 * SECOND, &mut st)) as u32;
                prop_assert!(n >= p.min_replicas && n <= p.max_replicas);
            }
        }

        #[test]
        fn monotone_load_never_scales_down(steps in proptest::collection::vec(0.0f64..3.0, 1..80)) {
            let p = policy();
            let mut st = AutoscalerState::default();
            let mut n = 1u32;
            let mut load = 0.0;
            for (i, s) in steps.iter().enumerate() {
                load += s;
                let d = autoscale_step(&p, n, load, i as u64 * 10 * SECOND, &mut st);
                prop_assert!(d >= 0);
                n = (n as i64 + d) as u32;
            }
        }
    }
}
