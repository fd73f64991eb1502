//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines are always visible in `cargo test` output; exits non-zero when
//! any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chaoscycle::chaos::experiment::{ChaosExperiment, ExperimentParams, Schedule};
use chaoscycle::chaos::model::{InjectionLevel, MonitoringSource, Scenario};
use chaoscycle::chaos::pool::{build_pool, canonical_suite, experiment};
use chaoscycle::config::Config;
use chaoscycle::eval::cross::ServiceState;
use chaoscycle::eval::impact::Cell;
use chaoscycle::eval::index::TraceIndex;
use chaoscycle::eval::snapshot::Phase;
use chaoscycle::harness::{blast_radius_study, run_cycle, run_load, to_json_string, CycleRun};
use chaoscycle::kernel::rng::stream;
use chaoscycle::system::catalog::*;
use chaoscycle::system::model::FaultMode;

/// Wall-clock limit per blast-radius experiment.
const BLAST_RUNTIME_LIMIT: Duration = Duration::from_secs(60);
/// Wall-clock limit per load run.
const LOAD_RUNTIME_LIMIT: Duration = Duration::from_secs(120);
const BLAST_WINDOWS: usize = 7;

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: Vec<String>, ok_detail: String) -> Outcome {
    if failures.is_empty() {
        Outcome {
            pass: true,
            detail: ok_detail,
        }
    } else {
        Outcome {
            pass: false,
            detail: failures.join("; "),
        }
    }
}

fn cfg(recovery: bool) -> Config {
    let mut c = Config::default();
    c.cycle.recovery = recovery;
    c
}

fn canonical_runs(recovery: bool) -> Vec<(ChaosExperiment, CycleRun)> {
    let c = cfg(recovery);
    canonical_suite(&c)
        .into_iter()
        .map(|e| {
            let run = run_cycle(&c, Some(&e)).expect("canonical cycle runs");
            (e, run)
        })
        .collect()
}

fn first_affected(series: &[Cell]) -> Option<usize> {
    series.iter().position(|c| *c != Cell::None)
}

fn blast_radius() -> Outcome {
    let c = cfg(false);
    let started = Instant::now();
    let study = blast_radius_study(&c, &[], BLAST_WINDOWS, 1).expect("study runs");
    let per_experiment = started.elapsed() / PUBLIC_SERVICES.len() as u32;
    let m = &study.matrix;
    let mut fails = Vec::new();
    let series = |row: &str, col: &str| m.series(row, col).map(<[Cell]>::to_vec).unwrap_or_default();
    let mismatch = |row: &str, col: &str, want: Vec<Cell>| {
        let got = series(row, col);
        (got != want).then(|| format!("{row} -> {col}: {got:?}"))
    };
    use Cell::{High as H, Low as L, Medium as M, None as N};
    let all = |c: Cell| vec![c; BLAST_WINDOWS];
    let from = |w: usize, c: Cell| (0..BLAST_WINDOWS).map(|i| if i < w { N } else { c }).collect::<Vec<_>>();

    for col in m.columns.iter().filter(|c| *c != MQTT_BROKER) {
        fails.extend(mismatch(MQTT_BROKER, col, all(H)));
    }
    fails.extend(mismatch(TEMPERATURE_SENSOR, USER_INTERFACE, all(L)));
    fails.extend(mismatch(TEMPERATURE_SENSOR, HEATING_CONTROL, all(H)));
    fails.extend(mismatch(TEMPERATURE_SENSOR, HEATING_ACTUATOR, from(1, H)));
    fails.extend(mismatch(HEATING_CONTROL, HEATING_ACTUATOR, from(1, H)));
    fails.extend(mismatch(LIGHT_CONTROL, LIGHT_ACTUATOR, from(1, H)));
    let escalate = (c.evaluation.prolonged_outage_ms / c.impact_window()) as usize;
    let escalating: Vec<Cell> = (0..BLAST_WINDOWS).map(|w| if w < escalate { M } else { H }).collect();
    fails.extend(mismatch(HEATING_ACTUATOR, HEATING_CONTROL, escalating.clone()));
    fails.extend(mismatch(LIGHT_ACTUATOR, LIGHT_CONTROL, escalating));
    for row in [MOTION_SENSOR, EXTERNAL_WEATHER] {
        let control = series(row, LIGHT_CONTROL);
        let actuator = series(row, LIGHT_ACTUATOR);
        match (first_affected(&control), first_affected(&actuator)) {
            (Some(c0), Some(a0)) if a0 > c0 && control[c0..].iter().all(|x| *x == M) => {}
            _ => fails.push(format!("{row}: light-control {control:?}, light-actuator {actuator:?}")),
        }
        for col in [HEATING_CONTROL, HEATING_ACTUATOR] {
            fails.extend(mismatch(row, col, all(N)));
        }
    }
    if !study.aborted.is_empty() {
        fails.push(format!("aborted before injection: {:?}", study.aborted));
    }
    if per_experiment > BLAST_RUNTIME_LIMIT {
        fails.push(format!("{per_experiment:?} per experiment"));
    }
    outcome(
        fails,
        format!("{} rows x {BLAST_WINDOWS} windows match, {per_experiment:.2?} per experiment", m.rows.len()),
    )
}

fn cross_service(runs: &[(ChaosExperiment, CycleRun)]) -> Outcome {
    let mut fails = Vec::new();
    let mut faulty_scenarios = BTreeSet::new();
    for (e, run) in runs {
        let Some(x) = &run.report.cross_service else {
            fails.push(format!("{}: no cross-service report", e.id));
            continue;
        };
        let unavailable = x.reached(ServiceState::Unavailable);
        if !unavailable.is_empty() {
            fails.push(format!("{}: unavailable {unavailable:?}", e.id));
        }
        if !x.reached(ServiceState::Faulty).is_empty() {
            faulty_scenarios.insert(e.scenario);
        }
        let idle: usize = x.services.iter().map(|s| s.idle_intervals.len()).sum();
        if idle == 0 || !x.all_idle_bounded() {
            fails.push(format!("{}: {idle} idle intervals, bounded {}", e.id, x.all_idle_bounded()));
        }
    }
    if faulty_scenarios != BTreeSet::from([Scenario::SensorFault]) {
        fails.push(format!("faulty downstream state in {faulty_scenarios:?}"));
    }
    outcome(fails, "no unavailable, faulty only under FS2, idle intervals bounded".to_string())
}

fn table_one(runs: &[(ChaosExperiment, CycleRun)]) -> Outcome {
    let mut fails = Vec::new();
    let mut seen = Vec::new();
    for (e, run) in runs {
        let c = run.report.comparison.as_ref().expect("completed cycle");
        seen.push(format!("{}={:?}", e.scenario.code(), c.deviations));
        if !c.unexpected.is_empty() {
            fails.push(format!("{}: unexpected {:?}", e.scenario.code(), c.unexpected));
        }
    }
    outcome(fails, seen.join(" "))
}

fn recovery_differential(on: &[(ChaosExperiment, CycleRun)], off: &[(ChaosExperiment, CycleRun)]) -> Outcome {
    let mut fails = Vec::new();
    let mut mttrs = Vec::new();
    for (e, run) in on {
        let r = &run.report;
        if r.phase_pass(Phase::After) != Some(true) {
            fails.push(format!("{} after phase fails with recovery", e.id));
        }
        match &r.mttr {
            Some(m) if m.within_bound => mttrs.push(format!("{}={}ms<={}ms", e.scenario.code(), m.mttr_ms.unwrap_or(0), m.bound_ms)),
            other => fails.push(format!("{} mttr {other:?}", e.id)),
        }
    }
    for (e, run) in off {
        let c = run.report.comparison.as_ref().expect("completed cycle");
        let during = &c.verdicts[&Phase::During];
        let cadence = Config::default().evaluation.snapshot_cadence_ms;
        let expected = (e.schedule.duration_ms / cadence) as usize;
        if during.len() != expected || during.iter().any(|v| v.pass) {
            let passing = during.iter().filter(|v| v.pass).count();
            fails.push(format!("{} without recovery: {passing}/{} during snapshots pass", e.id, during.len()));
        }
    }
    outcome(fails, format!("{}; every during snapshot fails without recovery", mttrs.join(" ")))
}

fn load_shape() -> Outcome {
    let started = Instant::now();
    let run = run_load(&Config::default()).expect("load run");
    let took = started.elapsed();
    let mut fails: Vec<String> = run
        .report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if took > LOAD_RUNTIME_LIMIT {
        fails.push(format!("took {took:?}"));
    }
    outcome(
        fails,
        format!(
            "{} shape checks, peak {} replicas, final {}, {took:.2?}",
            run.report.checks.len(),
            run.report.peak_replicas,
            run.report.final_replicas
        ),
    )
}

fn determinism() -> Outcome {
    let mut fails = Vec::new();
    let c = cfg(true);
    for e in canonical_suite(&c) {
        let a = run_cycle(&c, Some(&e)).expect("cycle");
        let b = run_cycle(&c, Some(&e)).expect("cycle");
        if a.trace.to_ndjson_string() != b.trace.to_ndjson_string() {
            fails.push(format!("{} trace differs", e.id));
        }
        if to_json_string(&a.report) != to_json_string(&b.report) {
            fails.push(format!("{} report differs", e.id));
        }
    }
    let a = run_load(&c).expect("load");
    let b = run_load(&c).expect("load");
    if a.trace.to_ndjson_string() != b.trace.to_ndjson_string() || to_json_string(&a.report) != to_json_string(&b.report) {
        fails.push("load run differs".to_string());
    }
    outcome(fails, "4 cycles and 1 load run byte-identical on repeat".to_string())
}

fn validator() -> Outcome {
    let c = cfg(true);
    let mut fails = Vec::new();
    let mut integrity = Vec::new();
    for (mode, want_perfect) in [(FaultMode::ErroneousRealistic, false), (FaultMode::ErroneousUnrealistic, true)] {
        let e = experiment(
            &c,
            format!("FS2-{mode:?}"),
            vec![TEMPERATURE_SENSOR.to_string()],
            ExperimentParams::SensorFault { mode },
            Schedule {
                start_ms: 0,
                duration_ms: 60_000,
            },
        );
        let run = run_cycle(&c, Some(&e)).expect("cycle");
        let index = TraceIndex::build(&run.trace, &c, run.report.manifest.t_end);
        let false_out: Vec<_> = index.validations.iter().filter(|v| v.is_false && v.out_of_range).collect();
        let in_range: Vec<_> = index.validations.iter().filter(|v| !v.out_of_range).collect();
        let false_in = in_range.iter().filter(|v| v.is_false).count();
        if false_out.iter().any(|v| v.accepted) {
            fails.push(format!("{mode:?}: out-of-range reading accepted"));
        }
        if in_range.iter().any(|v| !v.accepted) {
            fails.push(format!("{mode:?}: in-range reading rejected"));
        }
        if want_perfect && false_out.is_empty() || !want_perfect && false_in == 0 {
            fails.push(format!("{mode:?}: no injected readings reached the validator"));
        }
        let during = run.report.comparison.as_ref().expect("completed").metrics[&Phase::During].integrity;
        if (during == 1.0) != want_perfect {
            fails.push(format!("{mode:?}: integrity {during}"));
        }
        integrity.push(format!("{mode:?} integrity {during:.3}"));
    }
    outcome(fails, integrity.join(", "))
}

fn annotations() -> Outcome {
    use InjectionLevel as I;
    use MonitoringSource as M;
    let golden = |s: Scenario| -> (InjectionLevel, Vec<MonitoringSource>) {
        match s {
            Scenario::ServiceDown => (I::Infrastructure, vec![M::MonitoringTools, M::ChaosLogs]),
            Scenario::SensorFault => (I::Both, vec![M::SystemSelfMonitoring]),
            Scenario::SensorDown => (
                I::InfrastructureOrFunctional,
                vec![M::MonitoringTools, M::ChaosLogs, M::SystemSelfMonitoring],
            ),
            Scenario::ServiceDelayed => (I::Infrastructure, vec![M::MonitoringTools, M::ChaosLogs]),
        }
    };
    let c = Config::default();
    let mut all = build_pool(&c, &mut stream(c.seed, "pool")).expect("pool");
    all.extend(canonical_suite(&c));
    let fails: Vec<String> = all
        .iter()
        .filter(|e| (e.injection_level, e.monitoring_sources.clone()) != golden(e.scenario))
        .map(|e| format!("{}: {:?} {:?}", e.id, e.injection_level, e.monitoring_sources))
        .collect();
    outcome(fails, format!("{} experiments annotated", all.len()))
}

fn main() -> ExitCode {
    let on = canonical_runs(true);
    let off = canonical_runs(false);
    let criteria: Vec<(&str, Check)> = vec![
        ("blast-radius reproduction", Box::new(blast_radius)),
        ("cross-service state effects", Box::new(|| cross_service(&on))),
        ("quality-attribute conformance", Box::new(|| table_one(&on))),
        ("recovery differential", Box::new(|| recovery_differential(&on, &off))),
        ("load-ramp shape", Box::new(load_shape)),
        ("determinism", Box::new(determinism)),
        ("validator properties", Box::new(validator)),
        ("injection-level and monitoring annotations", Box::new(annotations)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let o = check();
        failed += !o.pass as usize;
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
