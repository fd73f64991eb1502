use chaoscycle::config::Config;
use chaoscycle::harness::{analyze, run_load, to_json_string, write_load, AnyReport};

#[test]
fn load_run_round_trips_through_its_artifacts() {
    let run = run_load(&Config::default()).unwrap();
    assert!(run.report.all_pass(), "{:#?}", run.report.checks);
    let dir = tempfile::tempdir().unwrap();
    write_load(dir.path(), &run).unwrap();
    let AnyReport::Load(again) = analyze(dir.path()).unwrap() else {
        panic!("load run analysed as cycle");
    };
    assert_eq!(*again, run.report);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("report.json")).unwrap(),
        to_json_string(&again)
    );
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), run.series.points.len() + 1);
}

#[test]
fn shorter_ramp_never_reaches_the_replica_ceiling() {
    let mut cfg = Config::default();
    cfg.workload.ramp_duration_ms = 5 * 60_000;
    cfg.workload.post_ramp_ms = 10 * 60_000;
    let run = run_load(&cfg).unwrap();
    assert!(run.report.peak_replicas < run.report.max_replicas_policy);
    let peak = run.report.checks.iter().find(|c| c.name.starts_with("replicas reach")).unwrap();
    assert!(!peak.pass);
}
