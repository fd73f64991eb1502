//! Failure model, experiment pool and weighted selection.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution as _, Exp};
use serde::{Deserialize, Serialize};

use crate::chaos::experiment::{ChaosExperiment, DrainMode, ExperimentParams, Schedule};
use crate::chaos::hypothesis::{Comparator, Predicate, SteadyStateHypothesis};
use crate::chaos::model::Scenario;
use crate::config::Config;
use crate::system::catalog::{self, MQTT_BROKER, TEMPERATURE_SENSOR};
use crate::system::model::{FaultMode, ServiceKind};
use crate::{Error, Millis, Result, SECOND};

/// Distribution over non-negative durations in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum Distribution {
    Fixed { value_ms: Millis },
    Uniform { lo_ms: Millis, hi_ms: Millis },
    Exponential { mean_ms: Millis },
}

impl Distribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Millis {
        match *self {
            Distribution::Fixed { value_ms } => value_ms,
            Distribution::Uniform { lo_ms, hi_ms } => rng.gen_range(lo_ms..=hi_ms),
            Distribution::Exponential { mean_ms } => {
                let exp = Exp::new(1.0 / mean_ms as f64).expect("validated mean");
                exp.sample(rng).round() as Millis
            }
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        match *self {
            Distribution::Uniform { lo_ms, hi_ms } if lo_ms > hi_ms => {
                Err(Error::config(field, "lo_ms must not exceed hi_ms"))
            }
            Distribution::Exponential { mean_ms: 0 } => Err(Error::config(field, "mean_ms must be > 0")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureModelParams {
    /// Numbers of simultaneous targets to combine.
    pub group_sizes: Vec<usize>,
    /// Time from the end of the warm-up to the injection.
    pub inter_arrival: Distribution,
    pub downtime: Distribution,
    /// Extra interval-varied experiments per scenario.
    pub repeats: usize,
}

impl Default for FailureModelParams {
    fn default() -> Self {
        Self {
            group_sizes: vec![1, 2, 3],
            inter_arrival: Distribution::Exponential {
                mean_ms: 120 * SECOND,
            },
            downtime: Distribution::Uniform {
                lo_ms: 30 * SECOND,
                hi_ms: 180 * SECOND,
            },
            repeats: 1,
        }
    }
}

impl FailureModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return Err(Error::config(
                "chaos.failure_model.group_sizes",
                "need at least one group size, all >= 1",
            ));
        }
        self.inter_arrival.validate("chaos.failure_model.inter_arrival")?;
        self.downtime.validate("chaos.failure_model.downtime")
    }
}

/// Services a scenario may target under `cfg`.
pub fn eligible_targets(cfg: &Config, scenario: Scenario) -> Vec<String> {
    if scenario.targets_sensors_only() {
        cfg.services
            .iter()
            .filter(|s| s.kind == ServiceKind::Sensor)
            .map(|s| s.name.clone())
            .collect()
    } else {
        catalog::PUBLIC_SERVICES
            .iter()
            .filter(|name| cfg.service(name).is_some())
            .map(|s| s.to_string())
            .collect()
    }
}

/// The steady-state hypothesis checked for a scenario.
pub fn hypothesis_for(cfg: &Config, scenario: Scenario, targets: &[String]) -> SteadyStateHypothesis {
    let window_ms = cfg.evaluation.snapshot_window_ms;
    let (title, predicates) = match scenario {
        Scenario::ServiceDown => (
            "all running services healthy and responsive",
            vec![
                Predicate::new("*", "healthy_replicas", Comparator::Ge, 1.0),
                Predicate::new("*", "responsive", Comparator::Ge, 1.0),
            ],
        ),
        Scenario::SensorFault => {
            let topics: Vec<&str> = targets
                .iter()
                .filter_map(|t| cfg.service(t))
                .flat_map(|s| s.publishes.iter().map(String::as_str))
                .collect();
            let consumers = cfg
                .services
                .iter()
                .filter(|s| s.kind == ServiceKind::Control)
                .filter(|s| s.required_inputs.iter().any(|i| topics.contains(&i.topic.as_str())));
            (
                "control services receive no erroneous sensing data",
                consumers
                    .map(|s| Predicate::new(&s.name, "accepted_out_of_range", Comparator::Le, 0.0))
                    .collect(),
            )
        }
        Scenario::SensorDown => (
            "sensing services never idle",
            targets
                .iter()
                .map(|t| Predicate::new(t, "idle", Comparator::Le, 0.0))
                .collect(),
        ),
        Scenario::ServiceDelayed => (
            "response time within the delay threshold",
            targets
                .iter()
                .map(|t| {
                    Predicate::new(
                        t,
                        "max_latency_ms",
                        Comparator::Le,
                        cfg.knowledge.delay_threshold_ms as f64,
                    )
                })
                .collect(),
        ),
    };
    SteadyStateHypothesis {
        title: title.to_string(),
        predicates,
        window_ms,
    }
}

pub fn default_params(cfg: &Config, scenario: Scenario) -> ExperimentParams {
    match scenario {
        Scenario::ServiceDown => ExperimentParams::ServiceDown {
            interval_ms: cfg.chaos.kill_interval_ms,
        },
        Scenario::SensorFault => ExperimentParams::SensorFault {
            mode: FaultMode::ErroneousMixed,
        },
        Scenario::SensorDown => ExperimentParams::SensorDown {
            drain: DrainMode::Instant,
        },
        Scenario::ServiceDelayed => ExperimentParams::ServiceDelayed {
            delay_ms: cfg.chaos.delay_ms,
            period_ms: cfg.chaos.delay_period_ms,
        },
    }
}

pub fn experiment(
    cfg: &Config,
    id: impl Into<String>,
    targets: Vec<String>,
    params: ExperimentParams,
    schedule: Schedule,
) -> ChaosExperiment {
    let h = hypothesis_for(cfg, params.scenario(), &targets);
    ChaosExperiment::new(id, targets, params, h, schedule)
}

/// One experiment per scenario with fixed, documented parameters.
pub fn canonical_suite(cfg: &Config) -> Vec<ChaosExperiment> {
    let one = |s: &str| vec![s.to_string()];
    vec![
        experiment(
            cfg,
            "FS1-canonical",
            one(MQTT_BROKER),
            ExperimentParams::ServiceDown {
                interval_ms: cfg.chaos.kill_interval_ms,
            },
            Schedule {
                start_ms: 0,
                duration_ms: 60 * SECOND,
            },
        ),
        experiment(
            cfg,
            "FS2-canonical",
            one(TEMPERATURE_SENSOR),
            ExperimentParams::SensorFault {
                mode: FaultMode::ErroneousMixed,
            },
            Schedule {
                start_ms: 0,
                duration_ms: 60 * SECOND,
            },
        ),
        experiment(
            cfg,
            "FS3-canonical",
            one(TEMPERATURE_SENSOR),
            ExperimentParams::SensorDown {
                drain: DrainMode::Instant,
            },
            Schedule {
                start_ms: 0,
                duration_ms: 60 * SECOND,
            },
        ),
        experiment(
            cfg,
            "FS4-canonical",
            one(TEMPERATURE_SENSOR),
            ExperimentParams::ServiceDelayed {
                delay_ms: cfg.chaos.delay_ms,
                period_ms: cfg.chaos.delay_ms,
            },
            Schedule {
                start_ms: 0,
                duration_ms: 90 * SECOND,
            },
        ),
    ]
}

/// Experiments plus their selection weights (always summing to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub experiments: Vec<ChaosExperiment>,
    pub weights: Vec<f64>,
}

impl Pool {
    pub fn uniform(experiments: Vec<ChaosExperiment>) -> Self {
        let n = experiments.len();
        Self {
            experiments,
            weights: vec![1.0 / n.max(1) as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.experiments.iter().position(|e| e.id == id)
    }
}

/// Builds the experiment pool: single-target experiments per eligible
/// service, k-combinations for each larger group size, and interval-varied
/// repeats. Downtimes and start offsets are drawn from the failure model.
pub fn build_pool<R: Rng + ?Sized>(cfg: &Config, rng: &mut R) -> Result<Vec<ChaosExperiment>> {
    let fm = &cfg.chaos.failure_model;
    fm.validate()?;
    if cfg.services.is_empty() {
        return Err(Error::config("services", "catalog is empty"));
    }
    let mut out = Vec::new();
    for scenario in Scenario::ALL {
        let eligible = eligible_targets(cfg, scenario);
        let mut seq = 0usize;
        let mut push = |out: &mut Vec<ChaosExperiment>, targets: Vec<String>, params: ExperimentParams, rng: &mut R| {
            seq += 1;
            let schedule = Schedule {
                start_ms: fm.inter_arrival.sample(rng),
                duration_ms: fm.downtime.sample(rng).max(1),
            };
            out.push(experiment(
                cfg,
                format!("{}-{:03}", scenario.code(), seq),
                targets,
                params,
                schedule,
            ));
        };

        let variants: Vec<ExperimentParams> = match scenario {
            Scenario::SensorFault => [
                FaultMode::ErroneousRealistic,
                FaultMode::ErroneousUnrealistic,
                FaultMode::ErroneousMixed,
            ]
            .into_iter()
            .map(|mode| ExperimentParams::SensorFault { mode })
            .collect(),
            Scenario::SensorDown => vec![
                ExperimentParams::SensorDown {
                    drain: DrainMode::Instant,
                },
                ExperimentParams::SensorDown {
                    drain: DrainMode::Rate {
                        per_min: cfg.chaos.drain_per_min,
                    },
                },
            ],
            _ => vec![default_params(cfg, scenario)],
        };

        for &k in &fm.group_sizes {
            if k > eligible.len() {
                log::info!(
                    "{}: group size {k} exceeds {} eligible targets, skipped",
                    scenario.code(),
                    eligible.len()
                );
                continue;
            }
            for params in &variants {
                if k == 1 {
                    for t in &eligible {
                        push(&mut out, vec![t.clone()], params.clone(), rng);
                    }
                } else {
                    let mut idx = sample(rng, eligible.len(), k).into_vec();
                    idx.sort_unstable();
                    let targets = idx.into_iter().map(|i| eligible[i].clone()).collect();
                    push(&mut out, targets, params.clone(), rng);
                }
            }
        }

        for _ in 0..fm.repeats {
            if eligible.is_empty() {
                break;
            }
            let target = eligible[rng.gen_range(0..eligible.len())].clone();
            let params = match scenario {
                Scenario::ServiceDown => ExperimentParams::ServiceDown {
                    interval_ms: [5, 10, 20][rng.gen_range(0..3)] * SECOND,
                },
                Scenario::ServiceDelayed => {
                    let period_ms = [60, 120, 180][rng.gen_range(0..3)] * SECOND;
                    ExperimentParams::ServiceDelayed {
                        delay_ms: cfg.chaos.delay_ms.min(period_ms),
                        period_ms,
                    }
                }
                _ => variants[rng.gen_range(0..variants.len())].clone(),
            };
            push(&mut out, vec![target], params, rng);
        }
    }
    Ok(out)
}

/// Weighted random pick; an empty pool signals suite completion.
pub fn select_next<R: Rng + ?Sized>(pool: &Pool, rng: &mut R) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let total: f64 = pool.weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in pool.weights.iter().enumerate() {
        if x < *w {
            return Ok(i);
        }
        x -= w;
    }
    Ok(pool.len() - 1)
}

/// Multiplies the weight of an experiment that exposed a hypothesis failure
/// by `boost`, then renormalises.
pub fn apply_feedback(pool: &mut Pool, index: usize, failed: bool, boost: f64) {
    if failed && index < pool.weights.len() {
        pool.weights[index] *= boost;
    }
    let total: f64 = pool.weights.iter().sum();
    if total > 0.0 {
        for w in &mut pool.weights {
            *w /= total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::model::{InjectionLevel, MonitoringSource};
    use crate::kernel::rng::stream;

    fn single_only() -> Config {
        let mut cfg = Config::default();
        cfg.chaos.failure_model.group_sizes = vec![1];
        cfg.chaos.failure_model.repeats = 0;
        cfg
    }

    #[test]
    fn single_target_service_down_covers_all_public_services() {
        let pool = build_pool(&single_only(), &mut stream(1, "pool")).unwrap();
        let fs1: Vec<_> = pool.iter().filter(|e| e.scenario == Scenario::ServiceDown).collect();
        assert_eq!(fs1.len(), 8);
    }

    #[test]
    fn sensor_fault_has_six_single_type_experiments() {
        let pool = build_pool(&single_only(), &mut stream(1, "pool")).unwrap();
        let fs2 = pool.iter().filter(|e| e.scenario == Scenario::SensorFault).count();
        assert_eq!(fs2, 6);
        let mut cfg = single_only();
        cfg.chaos.failure_model.group_sizes = vec![1, 2];
        let pool = build_pool(&cfg, &mut stream(1, "pool")).unwrap();
        let multi = pool
            .iter()
            .filter(|e| e.scenario == Scenario::SensorFault && e.targets.len() == 2)
            .count();
        assert_eq!(multi, 3);
    }

    #[test]
    fn delay_pool_carries_twenty_seconds_every_two_minutes() {
        let pool = build_pool(&Config::default(), &mut stream(1, "pool")).unwrap();
        assert!(pool.iter().any(|e| e.parameters
            == ExperimentParams::ServiceDelayed {
                delay_ms: 20 * SECOND,
                period_ms: 120 * SECOND
            }));
    }

    #[test]
    fn oversized_groups_are_skipped() {
        let mut cfg = single_only();
        cfg.chaos.failure_model.group_sizes = vec![3];
        let pool = build_pool(&cfg, &mut stream(1, "pool")).unwrap();
        assert!(pool.iter().all(|e| !e.scenario.targets_sensors_only()));
        assert!(pool.iter().all(|e| e.targets.len() == 3));
    }

    #[test]
    fn annotations_match_the_fault_level_and_monitoring_tables() {
        use InjectionLevel::*;
        use MonitoringSource::*;
        let golden = [
            (Scenario::ServiceDown, Infrastructure, vec![MonitoringTools, ChaosLogs]),
            (Scenario::SensorFault, Both, vec![SystemSelfMonitoring]),
            (
                Scenario::SensorDown,
                InfrastructureOrFunctional,
                vec![MonitoringTools, ChaosLogs, SystemSelfMonitoring],
            ),
            (Scenario::ServiceDelayed, Infrastructure, vec![MonitoringTools, ChaosLogs]),
        ];
        let pool = build_pool(&Config::default(), &mut stream(9, "pool")).unwrap();
        for e in &pool {
            let (_, level, sources) = golden.iter().find(|g| g.0 == e.scenario).unwrap();
            assert_eq!(e.injection_level, *level, "{}", e.id);
            assert_eq!(&e.monitoring_sources, sources, "{}", e.id);
        }
    }

    #[test]
    fn sensor_scenarios_only_target_sensors() {
        let cfg = Config::default();
        let pool = build_pool(&cfg, &mut stream(2, "pool")).unwrap();
        for e in pool.iter().filter(|e| e.scenario.targets_sensors_only()) {
            for t in &e.targets {
                assert_eq!(cfg.service(t).unwrap().kind, ServiceKind::Sensor);
            }
        }
    }

    #[test]
    fn pool_of_one_always_picks_it() {
        let cfg = Config::default();
        let pool = Pool::uniform(canonical_suite(&cfg)[..1].to_vec());
        let mut rng = stream(4, "select");
        for _ in 0..10 {
            assert_eq!(select_next(&pool, &mut rng).unwrap(), 0);
        }
        assert!(matches!(select_next(&Pool::uniform(vec![]), &mut rng), Err(Error::EmptyPool)));
    }

    #[test]
    fn fixed_seed_reproduces_the_pick_sequence() {
        let pool = Pool::uniform(canonical_suite(&Config::default()));
        let picks = |seed| {
            let mut rng = stream(seed, "select");
            (0..20).map(|_| select_next(&pool, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(picks(11), picks(11));
    }

    #[test]
    fn boosted_weight_triples_pick_frequency() {
        let mut pool = Pool::uniform(canonical_suite(&Config::default()));
        apply_feedback(&mut pool, 1, true, 3.0);
        let mut rng = stream(5, "select");
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_next(&pool, &mut rng).unwrap()] += 1;
        }
        let baseline = (counts[0] + counts[2] + counts[3]) as f64 / 3.0;
        let ratio = counts[1] as f64 / baseline;
        assert!((ratio - 3.0).abs() <= 0.3, "ratio {ratio}");
    }

    #[test]
    fn feedback_identity_and_doubling() {
        let mut pool = Pool::uniform(canonical_suite(&Config::default()));
        let before = pool.weights.clone();
        apply_feedback(&mut pool, 0, true, 1.0);
        assert_eq!(pool.weights, before);
        apply_feedback(&mut pool, 0, true, 2.0);
        assert!((pool.weights[0] / pool.weights[1] - 2.0).abs() < 1e-12);
        assert!((pool.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_failures_keep_relative_order() {
        let mut pool = Pool::uniform(canonical_suite(&Config::default()));
        let mut last = pool.weights[2] / pool.weights[0];
        for _ in 0..10 {
            apply_feedback(&mut pool, 2, true, 1.5);
            let r = pool.weights[2] / pool.weights[0];
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn sampled_durations_are_in_range() {
        let d = Distribution::Uniform { lo_ms: 30_000, hi_ms: 180_000 };
        let e = Distribution::Exponential { mean_ms: 120_000 };
        let mut rng = stream(6, "fm");
        for _ in 0..1000 {
            let x = d.sample(&mut rng);
            assert!((30_000..=180_000).contains(&x));
            let _ = e.sample(&mut rng);
        }
    }
}
