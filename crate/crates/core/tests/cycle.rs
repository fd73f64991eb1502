use chaoscycle::chaos::experiment::{ExperimentParams, Schedule};
use chaoscycle::chaos::hypothesis::{Comparator, Predicate};
use chaoscycle::chaos::model::{ChaosAction, Scenario};
use chaoscycle::chaos::pool::{canonical_suite, experiment};
use chaoscycle::config::Config;
use chaoscycle::eval::mttr::mttr_bound;
use chaoscycle::eval::snapshot::Phase;
use chaoscycle::harness::{analyze, run_cycle, to_json_string, write_cycle, AnyReport, CycleStatus};
use chaoscycle::system::catalog::{MQTT_BROKER, TEMPERATURE_SENSOR};
use proptest::prelude::*;

#[test]
fn clean_cycle_passes_every_phase_without_deviations() {
    let cfg = Config::default();
    let run = run_cycle(&cfg, None).unwrap();
    let r = &run.report;
    assert_eq!(r.status, CycleStatus::Completed);
    let c = r.comparison.as_ref().unwrap();
    for phase in Phase::ALL {
        assert_eq!(c.phase_pass.get(&phase), Some(&true), "{phase:?}");
    }
    assert!(c.deviations.is_empty());
    assert!(c.requirements.iter().all(|v| v.compliant));
    assert!(r.chaos_log.is_empty() && r.faults.is_empty() && r.mttr.is_none());
}

#[test]
fn unmet_steady_state_aborts_before_injection() {
    let cfg = Config::default();
    let mut exp = canonical_suite(&cfg).remove(0);
    exp.steady_state_hypothesis
        .predicates
        .push(Predicate::new(MQTT_BROKER, "healthy_replicas", Comparator::Ge, 99.0));
    let run = run_cycle(&cfg, Some(&exp)).unwrap();
    let r = &run.report;
    assert_eq!(r.status, CycleStatus::PreInjectionFailure);
    assert!(!r.pre_injection.pass);
    assert_eq!(r.pre_injection.deviations.len(), 1);
    assert!(r.chaos_log.is_empty());
    assert_eq!(r.manifest.t_end, r.manifest.t_inject);
    assert!(run.trace.records().iter().all(|rec| rec.at <= r.manifest.t_inject));
}

#[test]
fn unknown_target_is_logged_as_aborted() {
    let cfg = Config::default();
    let exp = experiment(
        &cfg,
        "ghost",
        vec!["no-such-service".to_string()],
        ExperimentParams::ServiceDown { interval_ms: 10_000 },
        Schedule {
            start_ms: 0,
            duration_ms: 30_000,
        },
    );
    let run = run_cycle(&cfg, Some(&exp)).unwrap();
    assert!(!run.report.chaos_log.is_empty());
    assert!(run
        .report
        .chaos_log
        .iter()
        .all(|e| matches!(e.action, ChaosAction::Aborted { .. })));
}

#[test]
fn analyze_reproduces_the_written_report() {
    let cfg = Config::default();
    let exp = canonical_suite(&cfg).remove(1);
    let run = run_cycle(&cfg, Some(&exp)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_cycle(dir.path(), &run).unwrap();
    for f in ["manifest.json", "trace.ndjson", "chaos_log.ndjson", "report.json", "metrics.csv", "summary.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let written = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let AnyReport::Cycle(again) = analyze(dir.path()).unwrap() else {
        panic!("cycle run analysed as load");
    };
    assert_eq!(to_json_string(&again), written);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("t_s,phase,availability,reliability,integrity"));
    assert!(csv.lines().any(|l| l.contains(",during,")));
}

#[test]
fn chaos_log_file_matches_the_trace() {
    let cfg = Config::default();
    let exp = canonical_suite(&cfg).remove(0);
    let run = run_cycle(&cfg, Some(&exp)).unwrap();
    assert_eq!(run.trace.chaos_log(), run.report.chaos_log);
    let killed: Vec<u32> = run
        .report
        .chaos_log
        .iter()
        .filter_map(|e| match e.action {
            ChaosAction::KillPods { killed } => Some(killed),
            _ => None,
        })
        .collect();
    assert_eq!(killed.len() as u64, exp.schedule.duration_ms / cfg.chaos.kill_interval_ms);
    assert!(killed.iter().all(|k| *k >= 1));
    let last = run.report.chaos_log.last().unwrap();
    assert_eq!(last.pods_killed_total, killed.iter().sum::<u32>());
}

#[test]
fn recovery_bounds_follow_from_detection_timings() {
    let cfg = Config::default();
    let bounds: Vec<(Scenario, u64)> = canonical_suite(&cfg)
        .iter()
        .map(|e| (e.scenario, mttr_bound(&cfg, e)))
        .collect();
    assert_eq!(
        bounds,
        vec![
            (Scenario::ServiceDown, 7_000),
            (Scenario::SensorFault, 35_000),
            (Scenario::SensorDown, 11_000),
            (Scenario::ServiceDelayed, 39_000),
        ]
    );
}

#[test]
fn drained_sensor_switches_to_backup_and_resumes() {
    let cfg = Config::default();
    let exp = canonical_suite(&cfg).remove(2);
    assert_eq!(exp.targets, vec![TEMPERATURE_SENSOR.to_string()]);
    let run = run_cycle(&cfg, Some(&exp)).unwrap();
    let m = run.report.mttr.as_ref().unwrap();
    assert!(m.within_bound, "{m:?}");
    assert_eq!(run.report.phase_pass(Phase::During), Some(false));
    assert_eq!(run.report.phase_pass(Phase::After), Some(true));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn canonical_scenarios_recover_within_bound_for_any_seed(seed in any::<u64>()) {
        let cfg = Config {
            seed,
            ..Config::default()
        };
        for exp in canonical_suite(&cfg) {
            let run = run_cycle(&cfg, Some(&exp)).unwrap();
            let r = &run.report;
            prop_assert_eq!(r.status, CycleStatus::Completed);
            prop_assert_eq!(r.phase_pass(Phase::After), Some(true), "{}", exp.id);
            let m = r.mttr.as_ref().unwrap();
            prop_assert!(m.within_bound, "{} {:?}", exp.id, m);
            prop_assert!(r.comparison.as_ref().unwrap().conforms, "{}", exp.id);
        }
    }
}
