//! Run orchestration, reports and file exports.
//!
//! Every run writes a directory holding its manifest, the full event trace
//! and the derived report. [`analyze`] recomputes the report from the first
//! two alone, so any figure can be regenerated without re-running.

pub mod blast;
pub mod cycle;
pub mod load;
pub mod suite;

use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chaos::experiment::ChaosExperiment;
use crate::config::Config;
use crate::trace::Trace;
use crate::{Millis, Result};

pub use blast::{blast_radius_study, BlastStudy};
pub use cycle::{evaluate, run_cycle, CycleRun, CycleStatus, CycleTimes, RunReport};
pub use load::{evaluate_load, run_load, LoadReport, LoadRun};
pub use suite::{run_suite, SuiteOptions, SuiteReport};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Cycle,
    Load,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: RunMode,
    pub seed: u64,
    pub recovery: bool,
    pub t_inject: Millis,
    pub t_end: Millis,
    pub experiment: Option<ChaosExperiment>,
    pub config: Config,
}

impl Manifest {
    pub fn new(
        mode: RunMode,
        config: Config,
        experiment: Option<ChaosExperiment>,
        t_inject: Millis,
        t_end: Millis,
    ) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            mode,
            seed: config.seed,
            recovery: config.cycle.recovery,
            t_inject,
            t_end,
            experiment,
            config,
        }
    }
}

/// A report recomputed from a run directory.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyReport {
    Cycle(Box<RunReport>),
    Load(Box<LoadReport>),
}

impl AnyReport {
    pub fn to_json_string(&self) -> String {
        match self {
            AnyReport::Cycle(r) => to_json_string(r),
            AnyReport::Load(r) => to_json_string(r),
        }
    }
}

/// Pretty JSON with a trailing newline, as written to report files.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

fn write_ndjson<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item)?);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_common(dir: &Path, manifest: &Manifest, trace: &Trace) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), to_json_string(manifest))?;
    let file = fs::File::create(dir.join("trace.ndjson"))?;
    trace.write_ndjson(std::io::BufWriter::new(file))?;
    Ok(())
}

/// Writes manifest, trace, chaos log, report, metric series and summary.
pub fn write_cycle(dir: &Path, run: &CycleRun) -> Result<()> {
    let r = &run.report;
    write_common(dir, &r.manifest, &run.trace)?;
    write_ndjson(&dir.join("chaos_log.ndjson"), &r.chaos_log)?;
    fs::write(dir.join("report.json"), to_json_string(r))?;
    fs::write(dir.join("metrics.csv"), cycle::metric_series_csv(&run.trace, &r.manifest)?)?;
    fs::write(dir.join("summary.txt"), cycle::summary_text(r)?)?;
    Ok(())
}

/// Writes manifest, trace, report, latency series and summary of a load run.
pub fn write_load(dir: &Path, run: &LoadRun) -> Result<()> {
    write_common(dir, &run.report.manifest, &run.trace)?;
    fs::write(dir.join("report.json"), to_json_string(&run.report))?;
    fs::write(dir.join("metrics.csv"), run.series.to_csv()?)?;
    fs::write(dir.join("summary.txt"), load::summary_text(&run.report))?;
    Ok(())
}

/// Reads the manifest and trace of a run directory.
pub fn read_run(dir: &Path) -> Result<(Manifest, Trace)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let trace = Trace::read_ndjson(BufReader::new(fs::File::open(dir.join("trace.ndjson"))?))?;
    Ok((manifest, trace))
}

/// Recomputes the report of a run directory from its manifest and trace.
pub fn analyze(dir: &Path) -> Result<AnyReport> {
    let (manifest, trace) = read_run(dir)?;
    Ok(match manifest.mode {
        RunMode::Cycle => AnyReport::Cycle(Box::new(evaluate(&trace, &manifest)?)),
        RunMode::Load => AnyReport::Load(Box::new(evaluate_load(&trace, &manifest)?.0)),
    })
}
