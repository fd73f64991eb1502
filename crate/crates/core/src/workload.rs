//! Open-loop user ramp against one service and per-second latency summaries.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::system::catalog::LIGHT_CONTROL;
use crate::system::model::ReplicaState;
use crate::trace::{Detail, Origin, Trace};
use crate::{Error, Millis, Result, MINUTE, SECOND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadProfile {
    pub target: String,
    pub initial_users: u32,
    /// One more user joins after every interval.
    pub add_interval_ms: Millis,
    /// Requests per second per user.
    pub per_user_rate: f64,
    pub ramp_duration_ms: Millis,
    /// Observation time after all users stop.
    pub post_ramp_ms: Millis,
    /// Simulation time at which the first user starts.
    pub start_ms: Millis,
    /// Half-width of the uniform jitter added to every send time.
    pub jitter_ms: Millis,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            target: LIGHT_CONTROL.to_string(),
            initial_users: 1,
            add_interval_ms: 20 * SECOND,
            per_user_rate: 1.0,
            ramp_duration_ms: 20 * MINUTE,
            post_ramp_ms: 18 * MINUTE,
            start_ms: 10 * SECOND,
            jitter_ms: 50,
        }
    }
}

impl LoadProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(format!("workload.{field}"), reason));
        if self.initial_users == 0 {
            return bad("initial_users", "must be > 0");
        }
        if self.add_interval_ms == 0 {
            return bad("add_interval_ms", "must be > 0");
        }
        if !(self.per_user_rate > 0.0) {
            return bad("per_user_rate", "must be > 0");
        }
        if self.ramp_duration_ms == 0 {
            return bad("ramp_duration_ms", "must be > 0");
        }
        if self.jitter_ms * 2 >= self.send_interval() {
            return bad("jitter_ms", "must be below half the send interval");
        }
        Ok(())
    }

    pub fn send_interval(&self) -> Millis {
        (1000.0 / self.per_user_rate).round().max(1.0) as Millis
    }

    /// Active users `t` milliseconds after the load started.
    pub fn users_at(&self, t: Millis) -> u32 {
        if t >= self.ramp_duration_ms {
            0
        } else {
            self.initial_users + (t / self.add_interval_ms) as u32
        }
    }

    pub fn end_ms(&self) -> Millis {
        self.start_ms + self.ramp_duration_ms
    }

    pub fn peak_users(&self) -> u32 {
        self.users_at(self.ramp_duration_ms - 1)
    }

    /// Peak request rate including one monitoring probe per second.
    pub fn peak_rate(&self, probe_rate: f64) -> f64 {
        self.peak_users() as f64 * self.per_user_rate + probe_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRequest {
    pub at: Millis,
    pub user: u32,
}

/// Every request of the ramp, sorted by send time.
pub fn generate_requests<R: Rng + ?Sized>(profile: &LoadProfile, rng: &mut R) -> Vec<PlannedRequest> {
    let interval = profile.send_interval();
    let total_users = profile.peak_users();
    let mut out = Vec::new();
    for user in 0..total_users {
        let joined = if user < profile.initial_users {
            0
        } else {
            (user - profile.initial_users + 1) as Millis * profile.add_interval_ms
        };
        let mut k = 0;
        loop {
            let nominal = joined + k * interval;
            if nominal >= profile.ramp_duration_ms {
                break;
            }
            let j = profile.jitter_ms as i64;
            let offset = if j > 0 { rng.gen_range(-j..=j) } else { 0 };
            let t = (nominal as i64 + offset).clamp(joined as i64, profile.ramp_duration_ms as i64 - 1) as Millis;
            out.push(PlannedRequest {
                at: profile.start_ms + t,
                user,
            });
            k += 1;
        }
    }
    out.sort_by_key(|r| (r.at, r.user));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub slowest10_mean_ms: f64,
    pub slowest1_mean_ms: f64,
}

fn tail_mean(sorted_desc: &[Millis], fraction: f64) -> f64 {
    let n = ((sorted_desc.len() as f64 * fraction).ceil() as usize).max(1);
    sorted_desc[..n].iter().sum::<Millis>() as f64 / n as f64
}

/// Mean and slowest-tail means; `None` for an empty sample.
pub fn latency_stats(samples: &[Millis]) -> Option<LatencyStats> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    Some(LatencyStats {
        count: samples.len(),
        mean_ms: samples.iter().sum::<Millis>() as f64 / samples.len() as f64,
        slowest10_mean_ms: tail_mean(&sorted, 0.10),
        slowest1_mean_ms: tail_mean(&sorted, 0.01),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// Start of the one-second bucket.
    pub at: Millis,
    pub responses: usize,
    pub failures: usize,
    pub active_users: u32,
    pub replicas: u32,
    /// Absent when the bucket has no successful response.
    pub stats: Option<LatencyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencySeries {
    pub service: String,
    pub points: Vec<SeriesPoint>,
}

impl LatencySeries {
    pub fn max_replicas(&self) -> u32 {
        self.points.iter().map(|p| p.replicas).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "t_s",
            "responses_per_s",
            "failures_per_s",
            "active_users",
            "replicas",
            "mean_ms",
            "slowest10_mean_ms",
            "slowest1_mean_ms",
        ])
        .map_err(csv_err)?;
        for p in &self.points {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
            w.write_record([
                format!("{:.0}", p.at as f64 / 1000.0),
                p.responses.to_string(),
                p.failures.to_string(),
                p.active_users.to_string(),
                p.replicas.to_string(),
                f(p.stats.map(|s| s.mean_ms)),
                f(p.stats.map(|s| s.slowest10_mean_ms)),
                f(p.stats.map(|s| s.slowest1_mean_ms)),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Per-second series of responses (workload and probes) of the profile's
/// target, bucketed by completion time over `window`.
pub fn summarize(trace: &Trace, profile: &LoadProfile, window: Range<Millis>) -> LatencySeries {
    let service = profile.target.as_str();
    let mut ok: BTreeMap<Millis, Vec<Millis>> = BTreeMap::new();
    let mut failed: BTreeMap<Millis, usize> = BTreeMap::new();
    let mut replica_changes: Vec<(Millis, i32)> = Vec::new();
    for r in trace.records() {
        match &r.detail {
            Detail::Request {
                service: s,
                latency_ms,
                ok: success,
                origin,
                ..
            } if s == service && matches!(origin, Origin::Probe | Origin::Workload { .. }) => {
                let bucket = r.at / SECOND * SECOND;
                if *success {
                    ok.entry(bucket).or_default().push(*latency_ms);
                } else {
                    *failed.entry(bucket).or_default() += 1;
                }
            }
            Detail::ReplicaState { service: s, from, to } if s == service => {
                let delta = match (from, to) {
                    (_, ReplicaState::Healthy) => 1,
                    (Some(ReplicaState::Healthy), ReplicaState::Terminated) => -1,
                    _ => 0,
                };
                if delta != 0 {
                    replica_changes.push((r.at, delta));
                }
            }
            _ => {}
        }
    }
    let mut points = Vec::new();
    let mut healthy = 0i32;
    let mut changes = replica_changes.into_iter().peekable();
    let mut t = window.start / SECOND * SECOND;
    while t < window.end {
        let bucket_end = t + SECOND;
        while let Some(&(at, d)) = changes.peek() {
            if at < bucket_end {
                healthy += d;
                changes.next();
            } else {
                break;
            }
        }
        let samples = ok.get(&t).map(Vec::as_slice).unwrap_or(&[]);
        points.push(SeriesPoint {
            at: t,
            responses: samples.len(),
            failures: failed.get(&t).copied().unwrap_or(0),
            active_users: if t >= profile.start_ms {
                profile.users_at(t - profile.start_ms)
            } else {
                0
            },
            replicas: healthy.max(0) as u32,
            stats: latency_stats(samples),
        });
        t = bucket_end;
    }
    LatencySeries {
        service: service.to_string(),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::rng::stream;
    use proptest::prelude::*;

    /// Requests sent in `[from_s, to_s)` seconds after load start, shifted by
    /// half a second so jitter never crosses the edges.
    fn sent_between(reqs: &[PlannedRequest], p: &LoadProfile, from_s: Millis, to_s: Millis) -> usize {
        let lo = (p.start_ms + from_s * SECOND).saturating_sub(500);
        let hi = p.start_ms + to_s * SECOND - 500;
        reqs.iter().filter(|r| r.at >= lo && r.at < hi).count()
    }

    #[test]
    fn ramp_starts_with_one_user_and_adds_one_every_interval() {
        let p = LoadProfile::default();
        let reqs = generate_requests(&p, &mut stream(1, "load"));
        assert_eq!(sent_between(&reqs, &p, 0, 20), 20);
        assert_eq!(p.users_at(60 * SECOND), 4);
        assert_eq!(sent_between(&reqs, &p, 60, 70), 40);
        assert!(reqs.iter().all(|r| r.at < p.end_ms()));
        assert!(reqs.iter().all(|r| r.at >= p.start_ms));
        assert_eq!(p.peak_users(), 60);
    }

    #[test]
    fn uniform_latencies_collapse_all_stats() {
        let s = latency_stats(&[100; 50]).unwrap();
        assert_eq!((s.mean_ms, s.slowest10_mean_ms, s.slowest1_mean_ms), (100.0, 100.0, 100.0));
    }

    #[test]
    fn slowest_tenth_is_the_tail() {
        let mut v = vec![100; 90];
        v.extend([1000; 10]);
        let s = latency_stats(&v).unwrap();
        assert_eq!(s.slowest10_mean_ms, 1000.0);
        assert_eq!(s.slowest1_mean_ms, 1000.0);
        assert!(latency_stats(&[]).is_none());
    }

    #[test]
    fn invalid_profile_is_rejected() {
        let p = LoadProfile {
            add_interval_ms: 0,
            ..LoadProfile::default()
        };
        assert!(p.validate().unwrap_err().to_string().contains("workload.add_interval_ms"));
    }

    proptest! {
        #[test]
        fn stats_are_ordered(samples in proptest::collection::vec(0u64..100_000, 1..400)) {
            let s = latency_stats(&samples).unwrap();
            prop_assert!(s.mean_ms <= s.slowest10_mean_ms + 1e-9);
            prop_assert!(s.slowest10_mean_ms <= s.slowest1_mean_ms + 1e-9);
        }

        #[test]
        fn user_count_follows_the_step_formula(t in 0u64..1_200_000) {
            let p = LoadProfile::default();
            prop_assert_eq!(p.users_at(t), 1 + (t / 20_000) as u32);
        }
    }
}
