use chaoscycle::chaos::model::Scenario;
use chaoscycle::config::Config;
use chaoscycle::harness::suite::ExperimentSource;
use chaoscycle::harness::{run_suite, SuiteOptions};
use chaoscycle::Error;

fn opts(source: ExperimentSource, budget: usize, parallel: usize) -> SuiteOptions {
    SuiteOptions {
        budget,
        parallel,
        source,
        scenario: None,
        out: None,
    }
}

#[test]
fn zero_budget_yields_an_empty_aggregate() {
    let r = run_suite(&Config::default(), &opts(ExperimentSource::Pool, 0, 1)).unwrap();
    assert!(r.cycles.is_empty() && r.scenarios.is_empty() && r.selections.is_empty());
}

#[test]
fn empty_experiment_list_is_an_error() {
    let r = run_suite(&Config::default(), &opts(ExperimentSource::Given(vec![]), 3, 1));
    assert!(matches!(r, Err(Error::EmptyPool)));
}

#[test]
fn canonical_suite_runs_each_scenario_once_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut o = opts(ExperimentSource::Canonical, 10, 4);
    o.out = Some(dir.path().to_path_buf());
    let r = run_suite(&Config::default(), &o).unwrap();
    assert_eq!(r.cycles.len(), 4);
    assert_eq!(r.scenarios.len(), 4);
    assert!(r.cycles.iter().all(|c| c.error.is_none() && c.conforms == Some(true)));
    assert!(dir.path().join("suite.json").is_file());
    for c in &r.cycles {
        let sub = dir.path().join(format!("cycle-{:03}-{}", c.index, c.experiment));
        assert!(sub.join("report.json").is_file(), "{}", sub.display());
    }
}

#[test]
fn scenario_filter_restricts_the_suite() {
    let mut o = opts(ExperimentSource::Pool, 3, 3);
    o.scenario = Some(Scenario::SensorDown);
    let r = run_suite(&Config::default(), &o).unwrap();
    assert_eq!(r.cycles.len(), 3);
    assert!(r.cycles.iter().all(|c| c.scenario == Scenario::SensorDown));
}

#[test]
fn sampled_suite_is_reproducible_and_feeds_back_failures() {
    let cfg = Config::default();
    let o = opts(ExperimentSource::Pool, 8, 4);
    let a = run_suite(&cfg, &o).unwrap();
    let b = run_suite(&cfg, &o).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.selections.values().sum::<u32>(), 8);
    let total: f64 = a.final_weights.values().sum();
    assert!((total - 1.0).abs() < 1e-9);
    let failed: Vec<&String> = a
        .cycles
        .iter()
        .filter(|c| c.exposed_failure())
        .map(|c| &c.experiment)
        .collect();
    let untouched = a
        .final_weights
        .iter()
        .filter(|(id, _)| !a.selections.contains_key(*id))
        .map(|(_, w)| *w)
        .next()
        .unwrap();
    for id in failed {
        assert!(a.final_weights[id] > untouched, "{id}");
    }
}
