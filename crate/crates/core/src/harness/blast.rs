//! Blast-radius study: one repeated-kill experiment per public service with
//! recovery disabled, assembled into a single impact matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::experiment::{ChaosExperiment, ExperimentParams, Schedule};
use crate::chaos::pool::experiment;
use crate::config::Config;
use crate::eval::impact::{blast_row, BlastRadiusMatrix};
use crate::eval::index::TraceIndex;
use crate::harness::cycle::{observed_columns, run_cycle, CycleStatus};
use crate::system::catalog::PUBLIC_SERVICES;
use crate::Result;

/// Windows per row by default: long enough to show escalation after a
/// prolonged actuator outage.
pub const DEFAULT_WINDOWS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlastStudy {
    pub seed: u64,
    pub matrix: BlastRadiusMatrix,
    /// Targets whose cycle aborted before injection.
    pub aborted: Vec<String>,
}

/// The experiment used for one row of the study.
pub fn study_experiment(cfg: &Config, target: &str, windows: usize) -> ChaosExperiment {
    experiment(
        cfg,
        format!("FS1-blast-{target}"),
        vec![target.to_string()],
        ExperimentParams::ServiceDown {
            interval_ms: cfg.chaos.kill_interval_ms,
        },
        Schedule {
            start_ms: 0,
            duration_ms: cfg.impact_window() * windows as u64,
        },
    )
}

/// Runs the study over `targets` (every public service when empty).
pub fn blast_radius_study(cfg: &Config, targets: &[String], windows: usize, parallel: usize) -> Result<BlastStudy> {
    let mut cfg = cfg.clone();
    cfg.cycle.recovery = false;
    cfg.validate()?;
    let targets: Vec<String> = if targets.is_empty() {
        PUBLIC_SERVICES.iter().map(|s| s.to_string()).collect()
    } else {
        targets.to_vec()
    };
    let window_ms = cfg.impact_window();
    let columns = observed_columns(&cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| crate::Error::config("parallel", e.to_string()))?;
    let rows = pool.install(|| {
        targets
            .par_iter()
            .map(|t| {
                let exp = study_experiment(&cfg, t, windows);
                let run = run_cycle(&cfg, Some(&exp))?;
                if run.report.status != CycleStatus::Completed {
                    return Ok((t.clone(), None));
                }
                let m = &run.report.manifest;
                let index = TraceIndex::build(&run.trace, &cfg, m.t_end);
                Ok((t.clone(), Some(blast_row(&index, &exp.targets, m.t_inject, window_ms, windows, &columns))))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut matrix = BlastRadiusMatrix::new(window_ms, windows, columns);
    let mut aborted = Vec::new();
    for (t, row) in rows {
        match row {
            Some(r) => matrix.rows.push(r),
            None => aborted.push(t),
        }
    }
    Ok(BlastStudy {
        seed: cfg.seed,
        matrix,
        aborted,
    })
}
