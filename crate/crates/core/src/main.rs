use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use chaoscycle::chaos::experiment::{ChaosExperiment, Schedule};
use chaoscycle::chaos::model::Scenario;
use chaoscycle::chaos::pool::{build_pool, canonical_suite, default_params, experiment};
use chaoscycle::config::Config;
use chaoscycle::harness::suite::ExperimentSource;
use chaoscycle::harness::{self, blast, cycle, load, SuiteOptions};
use chaoscycle::kernel::rng::stream;
use chaoscycle::{Error, Millis, Result};

#[derive(Parser)]
#[command(name = "chaoscycle", version, about = "Chaos experiments against a simulated self-healing smart office")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Whether the managing system (monitoring and repair) is active.
    #[arg(long, global = true, value_enum)]
    recovery: Option<Toggle>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chaos cycle and print its summary.
    RunCycle {
        /// Scenario code (FS1..FS4); runs its canonical experiment.
        #[arg(long, conflicts_with = "experiment")]
        scenario: Option<String>,
        /// Override the targets of the scenario (repeatable).
        #[arg(long = "target")]
        targets: Vec<String>,
        /// Experiment definition file (JSON).
        #[arg(long)]
        experiment: Option<PathBuf>,
        /// Override the injected downtime.
        #[arg(long)]
        duration_ms: Option<Millis>,
        /// Output directory for manifest, trace and report.
        #[arg(long, env = "CHAOSCYCLE_OUT")]
        out: Option<PathBuf>,
    },
    /// Run a suite of cycles and print the aggregate.
    RunSuite {
        /// Number of cycles.
        #[arg(long, default_value_t = 4)]
        budget: usize,
        /// Cycles run concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Sample from the generated pool instead of the canonical suite.
        #[arg(long, conflicts_with = "experiments")]
        pool: bool,
        /// Directory of experiment definitions (*.json), run in name order.
        #[arg(long)]
        experiments: Option<PathBuf>,
        /// Restrict to one scenario code.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, env = "CHAOSCYCLE_OUT")]
        out: Option<PathBuf>,
    },
    /// Run the user ramp against the autoscaled service.
    RunLoad {
        #[arg(long, env = "CHAOSCYCLE_OUT")]
        out: Option<PathBuf>,
    },
    /// Recompute the report of a run directory from its manifest and trace.
    Analyze { dir: PathBuf },
    /// List the generated experiment pool.
    ListPool {
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Kill each public service in turn with recovery off and print the impact matrix.
    BlastRadius {
        /// Restrict to these targets (repeatable).
        #[arg(long = "target")]
        targets: Vec<String>,
        #[arg(long, default_value_t = blast::DEFAULT_WINDOWS)]
        windows: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, env = "CHAOSCYCLE_OUT")]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.recovery {
        cfg.cycle.recovery = matches!(t, Toggle::On);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_scenario(code: &str) -> Result<Scenario> {
    Scenario::parse(code).ok_or_else(|| Error::config("scenario", format!("unknown scenario `{code}`")))
}

fn cycle_experiment(
    cfg: &Config,
    scenario: Option<&str>,
    targets: &[String],
    file: Option<&Path>,
    duration_ms: Option<Millis>,
) -> Result<Option<ChaosExperiment>> {
    let mut exp = match (file, scenario) {
        (Some(p), _) => ChaosExperiment::load(p)?,
        (None, Some(code)) => {
            let s = parse_scenario(code)?;
            let canonical = canonical_suite(cfg)
                .into_iter()
                .find(|e| e.scenario == s)
                .expect("every scenario has a canonical experiment");
            if targets.is_empty() {
                canonical
            } else {
                experiment(
                    cfg,
                    format!("{}-{}", s.code(), targets.join("+")),
                    targets.to_vec(),
                    default_params(cfg, s),
                    canonical.schedule,
                )
            }
        }
        (None, None) if targets.is_empty() => return Ok(None),
        (None, None) => return Err(Error::config("scenario", "--target needs --scenario")),
    };
    if let Some(d) = duration_ms {
        exp.schedule = Schedule {
            duration_ms: d,
            ..exp.schedule
        };
    }
    Ok(Some(exp))
}

fn load_experiments(dir: &Path) -> Result<Vec<ChaosExperiment>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| ChaosExperiment::load(p)).collect()
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::RunCycle {
            scenario,
            targets,
            experiment,
            duration_ms,
            out,
        } => {
            let exp = cycle_experiment(&cfg, scenario.as_deref(), &targets, experiment.as_deref(), duration_ms)?;
            let run = harness::run_cycle(&cfg, exp.as_ref())?;
            if let Some(dir) = out {
                harness::write_cycle(&dir, &run)?;
            }
            print!("{}", cycle::summary_text(&run.report)?);
            Ok(match run.report.status {
                cycle::CycleStatus::Completed => ExitCode::SUCCESS,
                cycle::CycleStatus::PreInjectionFailure => ExitCode::from(2),
            })
        }
        Command::RunSuite {
            budget,
            parallel,
            pool,
            experiments,
            scenario,
            out,
        } => {
            let source = match (pool, experiments) {
                (true, _) => ExperimentSource::Pool,
                (false, Some(dir)) => ExperimentSource::Given(load_experiments(&dir)?),
                (false, None) => ExperimentSource::Canonical,
            };
            let opts = SuiteOptions {
                budget,
                parallel,
                source,
                scenario: scenario.as_deref().map(parse_scenario).transpose()?,
                out,
            };
            let report = harness::run_suite(&cfg, &opts)?;
            for c in &report.cycles {
                let phases: Vec<String> = c
                    .phase_pass
                    .iter()
                    .map(|(p, ok)| format!("{}={}", p.as_str(), if *ok { "pass" } else { "fail" }))
                    .collect();
                println!(
                    "#{:03} {:<28} {} mttr={} {}",
                    c.index,
                    c.experiment,
                    phases.join(" "),
                    c.mttr_ms.map_or("-".to_string(), |m| format!("{}ms", m)),
                    c.error.as_deref().unwrap_or("")
                );
            }
            for (code, s) in &report.scenarios {
                println!(
                    "{code}: {} cycles, {} exposed failures, {} conforming, {} errors",
                    s.cycles, s.exposed_failures, s.conforming, s.errors
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::RunLoad { out } => {
            let run = harness::run_load(&cfg)?;
            if let Some(dir) = out {
                harness::write_load(&dir, &run)?;
            }
            print!("{}", load::summary_text(&run.report));
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { dir } => {
            print!("{}", harness::analyze(&dir)?.to_json_string());
            Ok(ExitCode::SUCCESS)
        }
        Command::ListPool { scenario } => {
            let filter = scenario.as_deref().map(parse_scenario).transpose()?;
            for e in build_pool(&cfg, &mut stream(cfg.seed, "pool"))? {
                if filter.is_none_or(|s| s == e.scenario) {
                    println!(
                        "{:<10} {:<40} start +{}ms for {}ms",
                        e.id,
                        e.targets.join("+"),
                        e.schedule.start_ms,
                        e.schedule.duration_ms
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::BlastRadius {
            targets,
            windows,
            parallel,
            out,
        } => {
            let study = harness::blast_radius_study(&cfg, &targets, windows, parallel)?;
            let csv = study.matrix.to_csv()?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("blast_radius.csv"), &csv)?;
                std::fs::write(
                    dir.join("blast_radius.json"),
                    serde_json::to_string_pretty(&study)?,
                )?;
            }
            print!("{csv}");
            for t in &study.aborted {
                eprintln!("{t}: steady state did not hold before injection");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
