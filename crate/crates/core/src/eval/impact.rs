//! Impact classification and blast-radius matrices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eval::index::TraceIndex;
use crate::Millis;

/// How strongly a service is affected during one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpactLevel {
    #[default]
    None,
    /// Fully functional, but a display input is missing.
    Low,
    /// Working from a strict subset of its inputs, or on degraded commands.
    Medium,
    /// No valid output, or every critical input missing.
    High,
}

impl ImpactLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ImpactLevel::None => "none",
            ImpactLevel::Low => "low",
            ImpactLevel::Medium => "medium",
            ImpactLevel::High => "high",
        }
    }
}

/// One blast-radius cell: an impact level, or the injected service itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    None,
    Low,
    Medium,
    High,
    Primary,
}

impl From<ImpactLevel> for Cell {
    fn from(l: ImpactLevel) -> Self {
        match l {
            ImpactLevel::None => Cell::None,
            ImpactLevel::Low => Cell::Low,
            ImpactLevel::Medium => Cell::Medium,
            ImpactLevel::High => Cell::High,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Cell::None => "none",
            Cell::Low => "low",
            Cell::Medium => "medium",
            Cell::High => "high",
            Cell::Primary => "primary",
        };
        f.write_str(s)
    }
}

/// Highest impact on `observed` over the samples in `(from, to]`.
pub fn classify_impact(index: &TraceIndex, observed: &str, from: Millis, to: Millis) -> ImpactLevel {
    index
        .samples_in(observed, from, to)
        .iter()
        .map(|s| s.impact)
        .max()
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlastRow {
    /// Injected services joined with `+`.
    pub injected: String,
    pub injected_at: Millis,
    /// `cells[column][window]`.
    pub cells: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlastRadiusMatrix {
    pub window_ms: Millis,
    pub windows: usize,
    pub columns: Vec<String>,
    pub rows: Vec<BlastRow>,
}

impl BlastRadiusMatrix {
    pub fn new(window_ms: Millis, windows: usize, columns: Vec<String>) -> Self {
        Self {
            window_ms,
            windows,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn cell(&self, injected: &str, observed: &str, window: usize) -> Option<Cell> {
        let row = self.rows.iter().find(|r| r.injected == injected)?;
        let col = self.columns.iter().position(|c| c == observed)?;
        row.cells.get(col)?.get(window).copied()
    }

    /// Cells of one (row, column) pair across all windows.
    pub fn series(&self, injected: &str, observed: &str) -> Option<&[Cell]> {
        let row = self.rows.iter().find(|r| r.injected == injected)?;
        let col = self.columns.iter().position(|c| c == observed)?;
        row.cells.get(col).map(Vec::as_slice)
    }

    /// Delimiter-separated grid: one row per injected service, one column per
    /// observed service and window.
    pub fn to_csv(&self) -> crate::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["injected".to_string()];
        for c in &self.columns {
            for k in 0..self.windows {
                header.push(format!("{c}@{k}"));
            }
        }
        w.write_record(&header).map_err(crate::workload::csv_err)?;
        for row in &self.rows {
            let mut line = vec![row.injected.clone()];
            for col in &row.cells {
                line.extend(col.iter().map(Cell::to_string));
            }
            w.write_record(&line).map_err(crate::workload::csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Impact row for one injection at `injected_at` over `windows` consecutive
/// windows; the injected services' own cells are marked primary.
pub fn blast_row(
    index: &TraceIndex,
    targets: &[String],
    injected_at: Millis,
    window_ms: Millis,
    windows: usize,
    columns: &[String],
) -> BlastRow {
    let cells = columns
        .iter()
        .map(|c| {
            (0..windows)
                .map(|k| {
                    if targets.contains(c) {
                        return Cell::Primary;
                    }
                    let from = injected_at + k as Millis * window_ms;
                    classify_impact(index, c, from, from + window_ms).into()
                })
                .collect()
        })
        .collect();
    BlastRow {
        injected: targets.join("+"),
        injected_at,
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::experiment::{ExperimentParams, Schedule};
    use crate::chaos::pool::experiment;
    use crate::config::Config;
    use crate::system::catalog::{HEATING_CONTROL, LIGHT_CONTROL, TEMPERATURE_SENSOR, USER_INTERFACE};
    use crate::world::World;

    /// Trace of a temperature-sensor outage from 60 s to 180 s, no recovery.
    fn sensor_outage() -> (Config, TraceIndex) {
        let cfg = Config::default();
        let exp = experiment(
            &cfg,
            "outage",
            vec![TEMPERATURE_SENSOR.to_string()],
            ExperimentParams::ServiceDown {
                interval_ms: cfg.chaos.kill_interval_ms,
            },
            Schedule {
                start_ms: 0,
                duration_ms: 120_000,
            },
        );
        let mut w = World::new(cfg.clone(), false).unwrap();
        w.run_until(60_000).unwrap();
        w.schedule_experiment(&exp, 60_000).unwrap();
        w.run_until(180_000).unwrap();
        let index = TraceIndex::build(w.trace(), &cfg, 180_000);
        (cfg, index)
    }

    #[test]
    fn clean_window_has_no_impact() {
        let (_, index) = sensor_outage();
        for s in [HEATING_CONTROL, LIGHT_CONTROL, USER_INTERFACE] {
            assert_eq!(classify_impact(&index, s, 10_000, 60_000), ImpactLevel::None, "{s}");
        }
    }

    #[test]
    fn lost_critical_input_is_high_and_unrelated_service_unaffected() {
        let (_, index) = sensor_outage();
        assert_eq!(classify_impact(&index, HEATING_CONTROL, 60_000, 120_000), ImpactLevel::High);
        assert_eq!(classify_impact(&index, USER_INTERFACE, 60_000, 120_000), ImpactLevel::Low);
        assert_eq!(classify_impact(&index, LIGHT_CONTROL, 60_000, 180_000), ImpactLevel::None);
    }

    #[test]
    fn row_marks_the_injected_service_as_primary() {
        let (cfg, index) = sensor_outage();
        let columns = vec![TEMPERATURE_SENSOR.to_string(), HEATING_CONTROL.to_string()];
        let row = blast_row(&index, &[TEMPERATURE_SENSOR.to_string()], 60_000, cfg.impact_window(), 2, &columns);
        assert_eq!(row.cells[0], vec![Cell::Primary, Cell::Primary]);
        assert_eq!(row.cells[1], vec![Cell::High, Cell::High]);
        let mut m = BlastRadiusMatrix::new(cfg.impact_window(), 2, columns);
        m.rows.push(row);
        let csv = m.to_csv().unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "injected,temperature-sensor@0,temperature-sensor@1,heating-control@0,heating-control@1"
        );
        assert_eq!(m.cell(TEMPERATURE_SENSOR, HEATING_CONTROL, 1), Some(Cell::High));
        assert_eq!(m.cell(TEMPERATURE_SENSOR, HEATING_CONTROL, 2), None);
    }

    #[test]
    fn levels_are_ordered_by_severity() {
        assert!(ImpactLevel::None < ImpactLevel::Low);
        assert!(ImpactLevel::Low < ImpactLevel::Medium);
        assert!(ImpactLevel::Medium < ImpactLevel::High);
        assert_eq!(Cell::from(ImpactLevel::Medium).to_string(), "medium");
    }
}
