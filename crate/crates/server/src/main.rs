use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use hoverscope::ingestion::load_dataset;
use hoverscope::replay::ReplayConfig;
use hoverscope::session::{Engine, SessionManager};
use hoverscope_server::{router, spawn_auto_runner, AppState};

/// Serve highlighting sessions over HTTP.
#[derive(Parser)]
#[command(name = "hoverscope-server", version)]
struct Args {
    /// Dataset configs to serve; each is published under its file stem.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// How often the auto-run trigger checks sessions, in ms.
    #[arg(long, default_value_t = 250)]
    tick_ms: u64,
}

#[tokio::main]
async fn main() -> Result<()> {
    let args = Args::parse();
    let mut manager = SessionManager::new();
    for path in &args.configs {
        let config = ReplayConfig::load(path)?;
        let dataset = config.dataset.as_deref().with_context(|| format!("{} has no `dataset` entry", path.display()))?;
        let loaded = load_dataset(dataset, &config.mapping)?;
        let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        eprintln!("dataset {id}: {} points ({} rows dropped)", loaded.dataset.len(), loaded.stats.dropped_total());
        manager.add_dataset(id, Arc::new(Engine::build(loaded.dataset, config.quadtree_params())?));
    }
    let state = AppState::new(manager);
    spawn_auto_runner(state.clone(), Duration::from_millis(args.tick_ms.max(1)));
    let listener = tokio::net::TcpListener::bind(&args.bind).await.with_context(|| format!("binding {}", args.bind))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
