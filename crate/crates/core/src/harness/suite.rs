//! Experiment suites: weighted selection, parallel cycles and aggregation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::experiment::ChaosExperiment;
use crate::chaos::model::Scenario;
use crate::chaos::pool::{apply_feedback, build_pool, canonical_suite, select_next, Pool};
use crate::config::Config;
use crate::eval::snapshot::Phase;
use crate::harness::cycle::{run_cycle, CycleRun, CycleStatus};
use crate::harness::{to_json_string, write_cycle};
use crate::kernel::rng::{derive_seed, stream};
use crate::{Error, Millis, Result};

/// Where the experiments of a suite come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentSource {
    /// The generated pool, sampled by weight with feedback.
    Pool,
    /// One cycle per canonical scenario, in order.
    Canonical,
    /// Caller-supplied experiments, each run once in order.
    Given(Vec<ChaosExperiment>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub budget: usize,
    pub parallel: usize,
    pub source: ExperimentSource,
    pub scenario: Option<Scenario>,
    /// Directory receiving one sub-directory per cycle plus `suite.json`.
    pub out: Option<PathBuf>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            budget: 4,
            parallel: 1,
            source: ExperimentSource::Canonical,
            scenario: None,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub index: usize,
    pub experiment: String,
    pub scenario: Scenario,
    pub targets: Vec<String>,
    pub seed: u64,
    pub status: Option<CycleStatus>,
    pub phase_pass: BTreeMap<Phase, bool>,
    pub conforms: Option<bool>,
    pub mttr_ms: Option<Millis>,
    pub within_bound: Option<bool>,
    pub error: Option<String>,
}

impl CycleSummary {
    pub fn exposed_failure(&self) -> bool {
        self.status == Some(CycleStatus::Completed)
            && (self.phase_pass.get(&Phase::During) == Some(&false) || self.phase_pass.get(&Phase::After) == Some(&false))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub cycles: usize,
    pub errors: usize,
    pub exposed_failures: usize,
    pub conforming: usize,
    pub mean_mttr_ms: Option<f64>,
    pub max_mttr_ms: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub budget: usize,
    pub recovery: bool,
    pub cycles: Vec<CycleSummary>,
    pub scenarios: BTreeMap<String, ScenarioSummary>,
    /// Times each experiment id was selected.
    pub selections: BTreeMap<String, u32>,
    pub final_weights: BTreeMap<String, f64>,
}

impl SuiteReport {
    fn aggregate(&mut self) {
        let mut by: BTreeMap<String, ScenarioSummary> = BTreeMap::new();
        let mut mttrs: BTreeMap<String, Vec<Millis>> = BTreeMap::new();
        for c in &self.cycles {
            let code = c.scenario.code().to_string();
            let s = by.entry(code.clone()).or_default();
            s.cycles += 1;
            s.errors += c.error.is_some() as usize;
            s.exposed_failures += c.exposed_failure() as usize;
            s.conforming += (c.conforms == Some(true)) as usize;
            if let Some(m) = c.mttr_ms {
                mttrs.entry(code).or_default().push(m);
            }
        }
        for (code, v) in mttrs {
            let s = by.get_mut(&code).expect("scenario present");
            s.mean_mttr_ms = Some(v.iter().sum::<Millis>() as f64 / v.len() as f64);
            s.max_mttr_ms = v.iter().max().copied();
        }
        self.scenarios = by;
    }
}

fn summarize_cycle(index: usize, exp: &ChaosExperiment, seed: u64, run: &Result<CycleRun>) -> CycleSummary {
    let mut s = CycleSummary {
        index,
        experiment: exp.id.clone(),
        scenario: exp.scenario,
        targets: exp.targets.clone(),
        seed,
        status: None,
        phase_pass: BTreeMap::new(),
        conforms: None,
        mttr_ms: None,
        within_bound: None,
        error: None,
    };
    match run {
        Ok(run) => {
            let r = &run.report;
            s.status = Some(r.status);
            if let Some(c) = &r.comparison {
                s.phase_pass = c.phase_pass.clone();
                s.conforms = Some(c.conforms);
            }
            if let Some(m) = &r.mttr {
                s.mttr_ms = m.mttr_ms;
                s.within_bound = Some(m.within_bound);
            }
        }
        Err(e) => s.error = Some(e.to_string()),
    }
    s
}

fn experiments(cfg: &Config, opts: &SuiteOptions) -> Result<Vec<ChaosExperiment>> {
    let all = match &opts.source {
        ExperimentSource::Pool => build_pool(cfg, &mut stream(cfg.seed, "pool"))?,
        ExperimentSource::Canonical => canonical_suite(cfg),
        ExperimentSource::Given(v) => v.clone(),
    };
    Ok(all
        .into_iter()
        .filter(|e| opts.scenario.is_none_or(|s| e.scenario == s))
        .collect())
}

/// Runs up to `budget` cycles. Cycles of one batch run in parallel on
/// independent simulations with derived seeds; feedback is applied between
/// batches in selection order, so results do not depend on thread timing.
/// A failing cycle is recorded in the report and does not stop the suite.
pub fn run_suite(cfg: &Config, opts: &SuiteOptions) -> Result<SuiteReport> {
    cfg.validate()?;
    let mut report = SuiteReport {
        seed: cfg.seed,
        budget: opts.budget,
        recovery: cfg.cycle.recovery,
        cycles: Vec::new(),
        scenarios: BTreeMap::new(),
        selections: BTreeMap::new(),
        final_weights: BTreeMap::new(),
    };
    if opts.budget == 0 {
        return Ok(report);
    }
    let exps = experiments(cfg, opts)?;
    if exps.is_empty() {
        return Err(Error::EmptyPool);
    }
    let sampled = opts.source == ExperimentSource::Pool;
    let budget = if sampled { opts.budget } else { opts.budget.min(exps.len()) };
    let mut pool = Pool::uniform(exps);
    let mut select_rng = stream(cfg.seed, "select");
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallel.max(1))
        .build()
        .map_err(|e| Error::config("parallel", e.to_string()))?;

    let mut next = 0usize;
    while next < budget {
        let batch_len = opts.parallel.max(1).min(budget - next);
        let mut batch = Vec::with_capacity(batch_len);
        for k in 0..batch_len {
            let i = next + k;
            let pick = if sampled { select_next(&pool, &mut select_rng)? } else { i };
            let mut c = cfg.clone();
            c.seed = derive_seed(cfg.seed, &format!("cycle-{i}"));
            batch.push((i, pick, c));
        }
        let runs: Vec<Result<CycleRun>> = threads.install(|| {
            batch
                .par_iter()
                .map(|(_, pick, c)| run_cycle(c, Some(&pool.experiments[*pick])))
                .collect()
        });
        for ((i, pick, c), run) in batch.iter().zip(runs) {
            let exp = &pool.experiments[*pick];
            if let (Some(dir), Ok(r)) = (&opts.out, &run) {
                write_cycle(&dir.join(format!("cycle-{i:03}-{}", exp.id)), r)?;
            }
            if let Err(e) = &run {
                log::error!("cycle {i} ({}) failed: {e}", exp.id);
            }
            let summary = summarize_cycle(*i, exp, c.seed, &run);
            *report.selections.entry(exp.id.clone()).or_default() += 1;
            if sampled {
                apply_feedback(&mut pool, *pick, summary.exposed_failure(), cfg.chaos.feedback_boost);
            }
            report.cycles.push(summary);
        }
        next += batch_len;
    }
    report.final_weights = pool
        .experiments
        .iter()
        .zip(&pool.weights)
        .map(|(e, w)| (e.id.clone(), *w))
        .collect();
    report.aggregate();
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("suite.json"), to_json_string(&report))?;
    }
    Ok(report)
}
