//! Command-line front end: offline replay, session statistics, latency
//! benchmarks and synthetic data generation.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hoverscope::ingestion::load_dataset;
use hoverscope::replay::{load_trace, replay, write_trace, ReplayConfig, StatsRow, StatsSummary};
use hoverscope::session::{Engine, SessionConfig, StageTimings};
use hoverscope::spatial_index::QuadtreeParams;
use hoverscope::synth::{self, TraceParams};

#[derive(Parser)]
#[command(name = "hoverscope", version, about = "Replay, statistics and benchmarks for spatial highlighting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// Number of time segments.
    #[arg(long)]
    g: Option<usize>,
    /// Feedback increment.
    #[arg(long)]
    delta: Option<f64>,
    /// Number of highlights.
    #[arg(long)]
    k: Option<usize>,
    /// Highlight time budget in ms; 0 removes the budget.
    #[arg(long)]
    time_limit_ms: Option<u64>,
    /// DBSCAN radius in pixels.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
}

impl Overrides {
    fn apply(&self, c: &mut SessionConfig) {
        if let Some(g) = self.g {
            c.g = g;
        }
        if let Some(d) = self.delta {
            c.delta = d;
        }
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(ms) = self.time_limit_ms {
            c.time_limit_ms = (ms > 0).then_some(ms);
        }
        if let Some(e) = self.eps {
            c.eps = e;
        }
        if let Some(m) = self.min_pts {
            c.min_pts = m;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace against a dataset and write the JSON report.
    Replay {
        /// Dataset file; defaults to the `dataset` entry of the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// TOML with the column mapping and optional [viewport], [session], [quadtree].
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines trace of {x, y, t}.
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize replay reports as a table of per-run and average statistics.
    Stats {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Emit JSON instead of the table.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-stage latency on synthetic datasets of growing size.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![100, 1000, 2000, 4000, 10000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dwell-and-move trace.
    GenerateTrace {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 60_000)]
        duration_ms: u64,
        #[arg(long, default_value_t = 3)]
        spots: usize,
        /// Hover cloud standard deviation in pixels.
        #[arg(long, default_value_t = 12.0)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic listings CSV and, optionally, its mapping config.
    GenerateDataset {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing stdout"),
    }
}

fn run_replay(
    dataset: Option<PathBuf>,
    config: &Path,
    trace: &Path,
    overrides: &Overrides,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = ReplayConfig::load(config)?;
    let Some(dataset) = dataset.or(cfg.dataset.take()) else {
        bail!("no dataset given: pass --dataset or set `dataset` in {}", config.display());
    };
    let loaded = load_dataset(&dataset, &cfg.mapping)?;
    if loaded.stats.dropped_total() > 0 {
        eprintln!("warning: dropped {} of {} rows {:?}", loaded.stats.dropped_total(), loaded.stats.rows_read, loaded.stats.dropped);
    }
    let moves = load_trace(trace)?;
    overrides.apply(&mut cfg.session);
    let engine = Arc::new(Engine::build(loaded.dataset, cfg.quadtree_params())?);
    let report = replay(engine, cfg.viewport, cfg.session, &moves)?;
    for w in &report.result.warnings {
        eprintln!("warning: {w}");
    }
    emit(out, &report.to_json())
}

fn run_stats(reports: &[PathBuf], json: bool, out: Option<&Path>) -> Result<()> {
    let rows = reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            StatsRow::from_report_json(name, &text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = StatsSummary::new(rows).context("no reports")?;
    if json {
        emit(out, &(serde_json::to_string_pretty(&summary)? + "\n"))
    } else {
        emit(out, &summary.table())
    }
}

type Stage = (&'static str, fn(&StageTimings) -> u64);

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn run_bench(sizes: &[usize], seed: u64, repeats: usize, overrides: &Overrides, out: Option<&Path>) -> Result<()> {
    if let Some(&n) = sizes.iter().find(|&&n| n < 100) {
        bail!("dataset sizes must be at least 100, got {n}");
    }
    let mut config = SessionConfig::default();
    overrides.apply(&mut config);
    config.validate()?;
    let trace = synth::dwell_trace(&TraceParams::default(), seed);
    let repeats = repeats.max(1);

    let stages: [Stage; 5] = [
        ("find_idrs", |t| t.find_idrs_us),
        ("match", |t| t.match_points_us),
        ("feedback", |t| t.update_feedback_us),
        ("highlights", |t| t.get_highlights_us),
        ("total", StageTimings::total_us),
    ];
    let mut header = vec!["size".to_owned(), "build ms".to_owned()];
    for (name, _) in &stages {
        header.push(format!("{name} p50"));
        header.push(format!("{name} p95"));
    }
    let mut rows = Vec::new();
    let mut builds = Vec::new();
    for &n in sizes {
        let loaded = synth::listings(n, seed)?;
        let start = Instant::now();
        let engine = Arc::new(Engine::build(loaded.dataset, QuadtreeParams::default())?);
        let build_ms = start.elapsed().as_secs_f64() * 1e3;
        builds.push((n, build_ms));
        let timings = (0..repeats)
            .map(|_| Ok(replay(engine.clone(), None, config, &trace)?.result.timings))
            .collect::<Result<Vec<_>>>()?;
        let mut row = vec![n.to_string(), format!("{build_ms:.1}")];
        for (_, stage) in &stages {
            let mut ms: Vec<f64> = timings.iter().map(|t| stage(t) as f64 / 1e3).collect();
            ms.sort_by(f64::total_cmp);
            row.push(format!("{:.3}", percentile(&ms, 0.5)));
            row.push(format!("{:.3}", percentile(&ms, 0.95)));
        }
        rows.push(row);
    }
    let mut pairs = builds.clone();
    pairs.sort_by_key(|b| b.0);
    for w in pairs.windows(2) {
        if w[1].1 < w[0].1 {
            eprintln!(
                "warning: index build for {} points ({:.1} ms) faster than for {} points ({:.1} ms)",
                w[1].0, w[1].1, w[0].0, w[0].1
            );
        }
    }

    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut text = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(text, "{}", cells.join("  "));
    }
    emit(out, &text)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Replay { dataset, config, trace, overrides, out } => {
            run_replay(dataset, &config, &trace, &overrides, out.as_deref())
        }
        Command::Stats { reports, json, out } => run_stats(&reports, json, out.as_deref()),
        Command::Bench { sizes, seed, repeats, overrides, out } => {
            run_bench(&sizes, seed, repeats, &overrides, out.as_deref())
        }
        Command::GenerateTrace { seed, duration_ms, spots, sigma, out } => {
            let params = TraceParams { duration_ms, spots, dwell_sigma_px: sigma, ..TraceParams::default() };
            emit(out.as_deref(), &write_trace(&synth::dwell_trace(&params, seed)))
        }
        Command::GenerateDataset { points, seed, out, config_out } => {
            if let Some(path) = config_out {
                fs::write(&path, synth::LISTINGS_MAPPING.trim_start())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            emit(out.as_deref(), &synth::listings_csv(points, seed))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert_eq!(percentile(&v, 0.95), 4.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }

    #[test]
    fn overrides_apply() {
        let mut c = SessionConfig::default();
        Overrides { g: Some(4), time_limit_ms: Some(0), ..Overrides::default() }.apply(&mut c);
        assert_eq!(c.g, 4);
        assert_eq!(c.time_limit_ms, None);
    }
}
