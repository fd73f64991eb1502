//! One chaos cycle: steady-state check, injection, observation and
//! evaluation of the resulting trace.

use serde::{Deserialize, Serialize};

use crate::chaos::experiment::ChaosExperiment;
use crate::chaos::hypothesis::{verify_hypothesis, SteadyStateHypothesis, Verdict};
use crate::chaos::model::{ChaosLogEntry, Scenario};
use crate::chaos::pool::hypothesis_for;
use crate::config::Config;
use crate::eval::compare::{compare, CycleComparison, PhaseWindows};
use crate::eval::cross::{cross_service_state_effects, CrossServiceReport};
use crate::eval::impact::{blast_row, BlastRadiusMatrix};
use crate::eval::index::TraceIndex;
use crate::eval::metrics::compute_metrics_indexed;
use crate::eval::mttr::{fault_recoveries, mttr, FaultRecovery, MttrRecord};
use crate::eval::snapshot::{capture_indexed, Phase, StateSnapshot};
use crate::harness::{Manifest, RunMode};
use crate::system::catalog::OBSERVED_SERVICES;
use crate::trace::Trace;
use crate::world::World;
use crate::{Millis, Result};

/// Key instants of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleTimes {
    pub t_inject: Millis,
    pub downtime: Millis,
    pub t_end: Millis,
}

impl CycleTimes {
    pub fn new(cfg: &Config, experiment: Option<&ChaosExperiment>) -> Self {
        let c = &cfg.cycle;
        let t_inject = c.warmup_ms + experiment.map_or(0, |e| e.schedule.start_ms);
        let downtime = experiment.map_or(c.after_window_ms, |e| e.schedule.duration_ms);
        Self {
            t_inject,
            downtime,
            t_end: t_inject + downtime + c.settle_ms + c.after_window_ms,
        }
    }

    pub fn windows(&self, cfg: &Config) -> PhaseWindows {
        PhaseWindows {
            before: (self.t_inject - cfg.cycle.before_window_ms, self.t_inject),
            during: (self.t_inject, self.t_inject + self.downtime),
            after: (self.t_end - cfg.cycle.after_window_ms, self.t_end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleStatus {
    Completed,
    /// The steady state did not hold before injection; nothing was injected.
    PreInjectionFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub manifest: Manifest,
    pub status: CycleStatus,
    pub pre_injection: Verdict,
    pub snapshots: Vec<StateSnapshot>,
    pub comparison: Option<CycleComparison>,
    pub blast_radius: Option<BlastRadiusMatrix>,
    pub cross_service: Option<CrossServiceReport>,
    pub mttr: Option<MttrRecord>,
    pub faults: Vec<FaultRecovery>,
    pub chaos_log: Vec<ChaosLogEntry>,
}

impl RunReport {
    pub fn phase_pass(&self, phase: Phase) -> Option<bool> {
        self.comparison.as_ref().and_then(|c| c.phase_pass.get(&phase).copied())
    }

    /// The experiment exposed a hypothesis failure after injection.
    pub fn exposed_failure(&self) -> bool {
        self.status == CycleStatus::Completed
            && (self.phase_pass(Phase::During) == Some(false) || self.phase_pass(Phase::After) == Some(false))
    }
}

/// A finished cycle: its report plus the trace it was computed from.
pub struct CycleRun {
    pub report: RunReport,
    pub trace: Trace,
}

/// Hypothesis checked by a cycle without an experiment.
pub fn default_hypothesis(cfg: &Config) -> SteadyStateHypothesis {
    hypothesis_for(cfg, Scenario::ServiceDown, &[])
}

fn hypothesis(manifest: &Manifest) -> SteadyStateHypothesis {
    manifest
        .experiment
        .as_ref()
        .map_or_else(|| default_hypothesis(&manifest.config), |e| e.steady_state_hypothesis.clone())
}

/// Runs one cycle of `experiment` (or a clean cycle) under `cfg`.
pub fn run_cycle(cfg: &Config, experiment: Option<&ChaosExperiment>) -> Result<CycleRun> {
    cfg.validate()?;
    if let Some(e) = experiment {
        e.validate()?;
    }
    let times = CycleTimes::new(cfg, experiment);
    let mut manifest = Manifest::new(RunMode::Cycle, cfg.clone(), experiment.cloned(), times.t_inject, times.t_end);
    let mut world = World::new(cfg.clone(), cfg.cycle.recovery)?;
    world.run_until(times.t_inject)?;

    let h = hypothesis(&manifest);
    let index = TraceIndex::build(world.trace(), cfg, times.t_inject);
    let pre = verify_hypothesis(&h, &capture_indexed(&index, times.t_inject, Phase::Before, h.window_ms)?)?;
    if pre.pass {
        if let Some(e) = experiment {
            world.schedule_experiment(e, times.t_inject)?;
        }
        world.run_until(times.t_end)?;
    } else {
        log::warn!("steady state does not hold before injection; cycle aborted");
        manifest.t_end = times.t_inject;
    }
    let trace = world.into_trace();
    let report = evaluate(&trace, &manifest)?;
    Ok(CycleRun { report, trace })
}

fn snapshot_times(from: Millis, to: Millis, cadence: Millis) -> impl Iterator<Item = Millis> {
    (1..).map(move |k| from + k * cadence).take_while(move |t| *t <= to)
}

/// Recomputes the report of a cycle from its trace and manifest alone.
pub fn evaluate(trace: &Trace, manifest: &Manifest) -> Result<RunReport> {
    let cfg = &manifest.config;
    let h = hypothesis(manifest);
    let t_inject = manifest.t_inject;
    let index = TraceIndex::build(trace, cfg, manifest.t_end);
    let pre_snap = capture_indexed(&index, t_inject, Phase::Before, h.window_ms)?;
    let pre_injection = verify_hypothesis(&h, &pre_snap)?;
    let faults = fault_recoveries(&index);
    if !pre_injection.pass || manifest.t_end <= t_inject {
        return Ok(RunReport {
            manifest: manifest.clone(),
            status: CycleStatus::PreInjectionFailure,
            pre_injection,
            snapshots: vec![pre_snap],
            comparison: None,
            blast_radius: None,
            cross_service: None,
            mttr: None,
            faults,
            chaos_log: index.chaos.clone(),
        });
    }

    let exp = manifest.experiment.as_ref();
    let times = CycleTimes::new(cfg, exp);
    let windows = times.windows(cfg);
    let cadence = cfg.evaluation.snapshot_cadence_ms;
    let mut snapshots = Vec::new();
    for phase in Phase::ALL {
        let (from, to) = windows.get(phase);
        for at in snapshot_times(from, to, cadence).filter(|t| *t >= h.window_ms) {
            snapshots.push(capture_indexed(&index, at, phase, h.window_ms)?);
        }
    }
    let comparison = compare(&index, cfg, exp.map(|e| e.scenario), &windows, &snapshots, &h)?;

    let (blast_radius, cross_service, recovery) = match exp {
        Some(e) => {
            let window_ms = cfg.impact_window();
            let count = (manifest.t_end - t_inject).div_ceil(window_ms) as usize;
            let columns = observed_columns(cfg);
            let mut m = BlastRadiusMatrix::new(window_ms, count, columns.clone());
            m.rows.push(blast_row(&index, &e.targets, t_inject, window_ms, count, &columns));
            let cross = cross_service_state_effects(&index, &e.targets, t_inject, manifest.t_end);
            (Some(m), Some(cross), mttr(&index, cfg, e))
        }
        None => (None, None, None),
    };
    Ok(RunReport {
        manifest: manifest.clone(),
        status: CycleStatus::Completed,
        pre_injection,
        snapshots,
        comparison: Some(comparison),
        blast_radius,
        cross_service,
        mttr: recovery,
        faults,
        chaos_log: index.chaos.clone(),
    })
}

pub(crate) fn observed_columns(cfg: &Config) -> Vec<String> {
    OBSERVED_SERVICES
        .iter()
        .filter(|s| cfg.service(s).is_some())
        .map(|s| s.to_string())
        .collect()
}

/// Quality metrics over consecutive cadence windows, one CSV row each.
pub fn metric_series_csv(trace: &Trace, manifest: &Manifest) -> Result<String> {
    let cfg = &manifest.config;
    let index = TraceIndex::build(trace, cfg, manifest.t_end);
    let times = CycleTimes::new(cfg, manifest.experiment.as_ref());
    let windows = times.windows(cfg);
    let cadence = cfg.evaluation.snapshot_cadence_ms;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t_s",
        "phase",
        "availability",
        "reliability",
        "integrity",
        "responses",
        "mean_ms",
        "slowest10_ms",
        "slowest1_ms",
    ])
    .map_err(crate::workload::csv_err)?;
    for at in snapshot_times(0, manifest.t_end, cadence) {
        let m = compute_metrics_indexed(&index, cfg, at - cadence, at)?;
        let phase = Phase::ALL
            .into_iter()
            .find(|p| {
                let (a, b) = windows.get(*p);
                at > a && at <= b
            })
            .map_or("", Phase::as_str);
        let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        let p = m.performance;
        w.write_record([
            format!("{}", at / 1000),
            phase.to_string(),
            format!("{:.4}", m.availability),
            format!("{:.4}", m.reliability),
            format!("{:.4}", m.integrity),
            p.map_or(0, |s| s.count).to_string(),
            f(p.map(|s| s.mean_ms)),
            f(p.map(|s| s.slowest10_mean_ms)),
            f(p.map(|s| s.slowest1_mean_ms)),
        ])
        .map_err(crate::workload::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn secs(ms: Millis) -> String {
    format!("{:.1}s", ms as f64 / 1000.0)
}

fn attrs(set: &std::collections::BTreeSet<crate::eval::metrics::QualityAttribute>) -> String {
    if set.is_empty() {
        return "-".to_string();
    }
    set.iter().map(|a| format!("{a:?}").to_lowercase()).collect::<Vec<_>>().join(",")
}

/// Human-readable digest of a cycle report.
pub fn summary_text(r: &RunReport) -> Result<String> {
    use std::fmt::Write;
    let m = &r.manifest;
    let mut s = String::new();
    let name = m.experiment.as_ref().map_or("clean cycle".to_string(), |e| {
        format!("{} ({}) on {}", e.id, e.scenario.code(), e.targets.join("+"))
    });
    let _ = writeln!(s, "{name}");
    let _ = writeln!(
        s,
        "seed {}  recovery {}  inject {}  end {}",
        m.seed,
        if m.recovery { "on" } else { "off" },
        secs(m.t_inject),
        secs(m.t_end)
    );
    let _ = writeln!(s, "status: {:?}", r.status);
    for d in &r.pre_injection.deviations {
        let _ = writeln!(s, "  pre-injection deviation: {d}");
    }
    if let Some(c) = &r.comparison {
        for (phase, pass) in &c.phase_pass {
            let m = &c.metrics[phase];
            let perf = m
                .performance
                .map_or("-".to_string(), |p| format!("{:.0}ms", p.mean_ms));
            let _ = writeln!(
                s,
                "{:<7} {}  availability {:.3}  reliability {:.3}  integrity {:.3}  mean latency {}",
                phase.as_str(),
                if *pass { "PASS" } else { "FAIL" },
                m.availability,
                m.reliability,
                m.integrity,
                perf
            );
        }
        let _ = writeln!(
            s,
            "deviations: {}  expected: {}  unexpected: {}  conforms: {}",
            attrs(&c.deviations),
            attrs(&c.expected),
            attrs(&c.unexpected),
            c.conforms
        );
        for v in c.requirements.iter().filter(|v| !v.compliant) {
            let _ = writeln!(s, "  {} violated {}x in {}", v.requirement, v.violations, v.phase.as_str());
        }
    }
    if let Some(t) = &r.mttr {
        let restored = t.mttr_ms.map_or("not restored".to_string(), secs);
        let _ = writeln!(s, "mttr: {restored} (bound {}, within: {})", secs(t.bound_ms), t.within_bound);
    }
    for f in &r.faults {
        let repaired = f.repaired_at.map_or("-".to_string(), |t| secs(t - f.detected_at));
        let _ = writeln!(
            s,
            "fault {} {:?} on {} detected {} repaired after {}",
            f.fault_id,
            f.kind,
            f.service,
            secs(f.detected_at),
            repaired
        );
    }
    if let Some(m) = &r.blast_radius {
        let _ = writeln!(s, "blast radius:");
        s.push_str(&m.to_csv()?);
    }
    Ok(s)
}
