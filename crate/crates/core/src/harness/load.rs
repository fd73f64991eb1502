//! Load run: the user ramp against one autoscaled service, summarised as a
//! per-second latency and replica series with shape checks.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::harness::{Manifest, RunMode};
use crate::trace::Trace;
use crate::workload::{summarize, LatencySeries, LoadProfile};
use crate::world::World;
use crate::{Error, Millis, Result, MINUTE};

/// Relative slack on the base service time when checking the return to base.
pub const BASE_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub manifest: Manifest,
    pub service: String,
    pub peak_users: u32,
    pub max_replicas_policy: u32,
    pub min_replicas_policy: u32,
    pub peak_replicas: u32,
    pub final_replicas: u32,
    pub responses: usize,
    pub failures: usize,
    pub peak_mean_latency_ms: Option<f64>,
    pub base_service_ms: Millis,
    pub checks: Vec<ShapeCheck>,
}

impl LoadReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub struct LoadRun {
    pub report: LoadReport,
    pub series: LatencySeries,
    pub trace: Trace,
}

/// Runs the configured workload profile to the end of its observation tail.
pub fn run_load(cfg: &Config) -> Result<LoadRun> {
    cfg.validate()?;
    let profile = &cfg.workload;
    let t_end = profile.end_ms() + profile.post_ramp_ms;
    let manifest = Manifest::new(RunMode::Load, cfg.clone(), None, profile.start_ms, t_end);
    let mut world = World::new(cfg.clone(), cfg.cycle.recovery)?;
    world.schedule_workload(profile)?;
    world.run_until(t_end)?;
    let trace = world.into_trace();
    let (report, series) = evaluate_load(&trace, &manifest)?;
    Ok(LoadRun { report, series, trace })
}

fn check(name: &str, pass: bool, detail: String) -> ShapeCheck {
    ShapeCheck {
        name: name.to_string(),
        pass,
        detail,
    }
}

/// Least-squares slope of `(x, y)` pairs; zero for fewer than two points.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Recomputes the series and shape checks of a load run from its trace.
pub fn evaluate_load(trace: &Trace, manifest: &Manifest) -> Result<(LoadReport, LatencySeries)> {
    let cfg = &manifest.config;
    let profile: &LoadProfile = &cfg.workload;
    let spec = cfg
        .service(&profile.target)
        .ok_or_else(|| Error::UnknownService(profile.target.clone()))?;
    let policy = &spec.replica_policy;
    let series = summarize(trace, profile, 0..manifest.t_end);
    let load_end = profile.end_ms();
    let cooldown = policy.scale_down_cooldown_ms;
    let pts = &series.points;
    let mut checks = Vec::new();

    let peak = series.max_replicas();
    checks.push(check(
        "replicas reach the maximum at peak load",
        peak == policy.max_replicas,
        format!("peak {peak}, maximum {}", policy.max_replicas),
    ));

    let held: Vec<u32> = pts
        .iter()
        .filter(|p| p.at >= load_end && p.at < load_end + cooldown)
        .map(|p| p.replicas)
        .collect();
    let holds = !held.is_empty() && held.iter().all(|r| *r == policy.max_replicas);
    checks.push(check(
        "replicas hold through the cooldown after the load stops",
        holds,
        format!("min over cooldown {}", held.iter().min().copied().unwrap_or(0)),
    ));

    let tail: Vec<u32> = pts.iter().filter(|p| p.at >= load_end).map(|p| p.replicas).collect();
    let non_increasing = tail.windows(2).all(|w| w[1] <= w[0]);
    let mut levels: Vec<u32> = tail.clone();
    levels.dedup();
    let final_replicas = tail.last().copied().unwrap_or(0);
    checks.push(check(
        "replicas step down to the minimum",
        non_increasing && levels.len() >= 3 && final_replicas == policy.min_replicas,
        format!("levels after load stop {levels:?}"),
    ));

    let ordered = pts
        .iter()
        .filter_map(|p| p.stats)
        .all(|s| s.mean_ms <= s.slowest10_mean_ms + 1e-9 && s.slowest10_mean_ms <= s.slowest1_mean_ms + 1e-9);
    checks.push(check(
        "mean <= slowest 10% <= slowest 1% in every second",
        ordered,
        String::new(),
    ));

    let half = profile.start_ms + profile.ramp_duration_ms / 2;
    let second_half: Vec<(f64, f64)> = pts
        .iter()
        .filter(|p| p.at >= half && p.at < load_end)
        .filter_map(|p| p.stats.map(|s| ((p.at / 1000) as f64, s.mean_ms)))
        .collect();
    let trend = slope(&second_half);
    checks.push(check(
        "mean latency trends upward in the second half of the ramp",
        trend > 0.0,
        format!("slope {trend:.4} ms/s"),
    ));

    let base = spec.base_service_ms as f64;
    let last_minute: Vec<f64> = pts
        .iter()
        .filter(|p| p.at + MINUTE >= manifest.t_end)
        .filter_map(|p| p.stats.map(|s| s.mean_ms))
        .collect();
    let worst = last_minute.iter().copied().fold(0.0, f64::max);
    checks.push(check(
        "latency returns to the base service time after the load",
        !last_minute.is_empty() && worst <= base * (1.0 + BASE_TOLERANCE),
        format!("worst mean in the last minute {worst:.1} ms, base {base:.0} ms"),
    ));

    let peak_mean = pts
        .iter()
        .filter(|p| p.at < load_end)
        .filter_map(|p| p.stats.map(|s| s.mean_ms))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let report = LoadReport {
        manifest: manifest.clone(),
        service: profile.target.clone(),
        peak_users: profile.peak_users(),
        max_replicas_policy: policy.max_replicas,
        min_replicas_policy: policy.min_replicas,
        peak_replicas: peak,
        final_replicas,
        responses: pts.iter().map(|p| p.responses).sum(),
        failures: pts.iter().map(|p| p.failures).sum(),
        peak_mean_latency_ms: peak_mean,
        base_service_ms: spec.base_service_ms,
        checks,
    };
    Ok((report, series))
}

/// Human-readable digest of a load report.
pub fn summary_text(r: &LoadReport) -> String {
    let mut s = format!(
        "load on {}: peak {} users, replicas {} -> {} (policy {}..{}), {} responses, {} failures\n",
        r.service,
        r.peak_users,
        r.peak_replicas,
        r.final_replicas,
        r.min_replicas_policy,
        r.max_replicas_policy,
        r.responses,
        r.failures
    );
    if let Some(p) = r.peak_mean_latency_ms {
        s.push_str(&format!("highest per-second mean latency {p:.0} ms, base {} ms\n", r.base_service_ms));
    }
    for c in &r.checks {
        s.push_str(&format!("{} {}  {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|x| (x as f64, 2.0 * x as f64 + 1.0)).collect();
        assert!((slope(&pts) - 2.0).abs() < 1e-12);
        assert_eq!(slope(&[(1.0, 1.0)]), 0.0);
        assert_eq!(slope(&[(1.0, 1.0), (1.0, 3.0)]), 0.0);
    }
}
