//! Offline replay of recorded traces and the session statistics derived from
//! the resulting reports.
//!
//! A trace is one `{"x": .., "y": .., "t": ..}` object per line, with `t` in
//! milliseconds from session start. Replaying feeds every sample through the
//! session throttle and runs the pipeline once with `t_c` set to the last
//! sample time.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{MovePoint, ViewportRef};
use crate::ingestion::{IngestError, MappingConfig};
use crate::session::{coverage_pct, Engine, PipelineResult, RunStats, Session, SessionConfig, SessionError};
use crate::spatial_index::QuadtreeParams;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("report {path}: {message}")]
    Report { path: String, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn read(path: &Path) -> Result<String, ReplayError> {
    fs::read_to_string(path).map_err(|source| ReplayError::Io { path: path.display().to_string(), source })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceRecord {
    x: f64,
    y: f64,
    t: u64,
}

/// Parses a trace; blank lines and lines starting with `#` are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<MovePoint>, ReplayError> {
    let mut moves = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let r: TraceRecord = serde_json::from_str(line)
            .map_err(|e| ReplayError::Trace { line: i + 1, message: e.to_string() })?;
        if !(r.x.is_finite() && r.y.is_finite()) {
            return Err(ReplayError::Trace { line: i + 1, message: "non-finite coordinate".into() });
        }
        moves.push(MovePoint::new(r.x, r.y, r.t));
    }
    Ok(moves)
}

pub fn load_trace(path: &Path) -> Result<Vec<MovePoint>, ReplayError> {
    parse_trace(&read(path)?)
}

pub fn write_trace(moves: &[MovePoint]) -> String {
    let mut out = String::new();
    for m in moves {
        let _ = writeln!(out, "{}", serde_json::json!({ "x": m.x, "y": m.y, "t": m.t }));
    }
    out
}

/// Replay configuration: the dataset mapping at top level plus optional
/// `[viewport]`, `[session]` and `[quadtree]` tables.
#[derive(Debug, Clone, Deserialize)]
pub struct ReplayConfig {
    /// Dataset path, relative to the config file.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(flatten)]
    pub mapping: MappingConfig,
    #[serde(default)]
    pub viewport: Option<ViewportRef>,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub quadtree: Option<QuadtreeSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadtreeSection {
    pub capacity: usize,
    pub max_depth: usize,
}

impl ReplayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ReplayError> {
        toml::from_str(text).map_err(|e| ReplayError::Config(e.to_string()))
    }

    /// Loads a config, resolving `dataset` against the config's directory.
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let mut config = Self::from_toml(&read(path)?)?;
        if let (Some(ds), Some(dir)) = (&config.dataset, path.parent()) {
            if ds.is_relative() {
                config.dataset = Some(dir.join(ds));
            }
        }
        Ok(config)
    }

    pub fn quadtree_params(&self) -> QuadtreeParams {
        self.quadtree
            .map(|q| QuadtreeParams { capacity: q.capacity, max_depth: q.max_depth })
            .unwrap_or_default()
    }
}

/// Report of one replay. Contains no wall-clock values.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub dataset_points: usize,
    pub trace_moves: usize,
    pub accepted_moves: usize,
    pub config: SessionConfig,
    pub result: PipelineResult,
}

impl ReplayReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Replays `trace` in a fresh session. Without a viewport, one is fitted to
/// the dataset bounds at 1024 × 768 pixels.
pub fn replay(
    engine: Arc<Engine>,
    viewport: Option<ViewportRef>,
    config: SessionConfig,
    trace: &[MovePoint],
) -> Result<ReplayReport, ReplayError> {
    let viewport = match viewport {
        Some(v) => v,
        None => ViewportRef::fit(engine.dataset.bounds(), 1024.0, 768.0).map_err(SessionError::from)?,
    };
    let dataset_points = engine.dataset.len();
    let mut session = Session::new(0, "replay", engine, viewport, config)?;
    let accepted = trace.iter().filter(|m| session.ingest_move(**m)).count();
    let t_c = session.log().last_t().unwrap_or(0);
    let result = session.run_pipeline(t_c)?;
    Ok(ReplayReport {
        dataset_points,
        trace_moves: trace.len(),
        accepted_moves: accepted,
        config,
        result: (*result).clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub name: String,
    pub regions: usize,
    pub idrs: usize,
    pub points_in_idrs: usize,
    pub dataset_size: usize,
    pub coverage_pct: f64,
}

impl StatsRow {
    pub fn from_stats(name: impl Into<String>, s: &RunStats) -> Self {
        StatsRow {
            name: name.into(),
            regions: s.regions,
            idrs: s.idrs,
            points_in_idrs: s.points_in_idrs,
            dataset_size: s.dataset_size,
            coverage_pct: coverage_pct(s.points_in_idrs, s.dataset_size),
        }
    }

    /// Reads the statistics out of a serialized [`ReplayReport`].
    pub fn from_report_json(name: impl Into<String>, json: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Stats {
            regions: usize,
            idrs: usize,
            points_in_idrs: usize,
            dataset_size: usize,
        }
        let v: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let stats = v.pointer("/result/stats").ok_or("missing result.stats")?;
        let s: Stats = serde_json::from_value(stats.clone()).map_err(|e| e.to_string())?;
        Ok(StatsRow::from_stats(name, &RunStats::new(s.regions, s.idrs, s.points_in_idrs, s.dataset_size)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsAverages {
    pub regions: f64,
    pub idrs: f64,
    pub points_in_idrs: f64,
    pub coverage_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsSummary {
    pub rows: Vec<StatsRow>,
    pub average: StatsAverages,
}

impl StatsSummary {
    /// `None` for an empty batch.
    pub fn new(rows: Vec<StatsRow>) -> Option<Self> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&StatsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let average = StatsAverages {
            regions: mean(&|r| r.regions as f64),
            idrs: mean(&|r| r.idrs as f64),
            points_in_idrs: mean(&|r| r.points_in_idrs as f64),
            coverage_pct: mean(&|r| r.coverage_pct),
        };
        Some(StatsSummary { rows, average })
    }

    /// Aligned console table with one line per run and a final average line.
    pub fn table(&self) -> String {
        let header = ["run", "#regions", "#IDRs", "#points in IDRs", "coverage %"];
        let mut cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    r.regions.to_string(),
                    r.idrs.to_string(),
                    r.points_in_idrs.to_string(),
                    format!("{:.2}", r.coverage_pct),
                ]
            })
            .collect();
        let a = &self.average;
        cells.push([
            "average".into(),
            format!("{:.2}", a.regions),
            format!("{:.2}", a.idrs),
            format!("{:.2}", a.points_in_idrs),
            format!("{:.2}", a.coverage_pct),
        ]);
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            for (i, c) in row.iter().enumerate() {
                if i == 0 {
                    let _ = write!(out, "{c:<w$}", w = widths[0]);
                } else {
                    let _ = write!(out, "  {c:>w$}", w = widths[i]);
                }
            }
            out.push('\n');
        };
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_parse_errors_carry_line_numbers() {
        let text = "{\"x\": 1, \"y\": 2, \"t\": 0}\n\n# note\n{\"x\": 1, \"t\": 200}\n";
        match parse_trace(text) {
            Err(ReplayError::Trace { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_trace("{\"x\": 1, \"y\": 2, \"t\": -5}").is_err());
    }

    #[test]
    fn trace_round_trip() {
        let moves = vec![MovePoint::new(1.5, -2.0, 0), MovePoint::new(3.0, 4.25, 200)];
        assert_eq!(parse_trace(&write_trace(&moves)).unwrap(), moves);
        assert!(parse_trace("").unwrap().is_empty());
    }

    #[test]
    fn config_sections() {
        let c = ReplayConfig::from_toml(
            r#"
dataset = "x.csv"
lat_column = "lat"
lon_column = "lon"

[viewport]
gamma = 48.86
theta = 2.33
scale = 0.0001

[session]
g = 2
k = 3

[quadtree]
capacity = 8
max_depth = 6
"#,
        )
        .unwrap();
        assert_eq!(c.session.g, 2);
        assert_eq!(c.session.eps, 40.0);
        assert_eq!(c.viewport.unwrap().scale, 1e-4);
        assert_eq!(c.quadtree_params().capacity, 8);
        assert!(ReplayConfig::from_toml("lat_column = \"lat\"\nlon_column = \"lon\"\n[session]\nbogus = 1\n").is_err());
    }

    fn row(name: &str, points: usize, size: usize) -> StatsRow {
        StatsRow::from_stats(name, &RunStats::new(3, 1, points, size))
    }

    #[test]
    fn coverage_extremes() {
        assert_eq!(row("a", 0, 100).coverage_pct, 0.0);
        assert_eq!(row("a", 100, 100).coverage_pct, 100.0);
        assert!(StatsSummary::new(vec![]).is_none());
    }

    #[test]
    fn averages_and_table() {
        let s = StatsSummary::new(vec![row("r1", 10, 100), row("r2", 30, 100)]).unwrap();
        assert_eq!(s.average.coverage_pct, 20.0);
        assert_eq!(s.average.points_in_idrs, 20.0);
        let table = s.table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert!(lines[4].starts_with("average"));
    }
}
