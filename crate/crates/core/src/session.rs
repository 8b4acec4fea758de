//! Per-analyst sessions: move ingestion, viewport tracking and the four-stage
//! highlighting pipeline.
//!
//! A run finds IDRs in a snapshot of the move log, matches dataset points
//! against them, folds the matched points into the feedback vector and picks
//! highlights among the points outside the IDRs. Stages only read the output
//! of earlier stages.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusteringError, DbscanParams, MoveLog};
use crate::feedback::{FeedbackError, FeedbackSnapshot, FeedbackVector};
use crate::geometry::{geo_to_pixel, pixel_to_geo, GeoBounds, GeometryError, MovePoint, ViewportRef};
use crate::highlight::{self, HighlightError, HighlightResult, Highlighter, InvertedIndex, SimilarityModel};
use crate::idr::{find_idrs, IdrDocument, IdrSet};
use crate::ingestion::{Dataset, PointId};
use crate::spatial_index::{MatchResult, Quadtree, QuadtreeParams, SpatialIndexError};

pub type SessionId = u64;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Highlight(#[from] HighlightError),
    #[error(transparent)]
    SpatialIndex(#[from] SpatialIndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Number of time segments.
    pub g: usize,
    /// Feedback increment per matched facet.
    pub delta: f64,
    /// Number of highlights.
    pub k: usize,
    /// Highlight time budget; `None` scans the whole ranked list.
    pub time_limit_ms: Option<u64>,
    /// DBSCAN radius in pixels.
    pub eps: f64,
    pub min_pts: usize,
    /// Period of the automatic trigger while moves keep arriving; `None` disables it.
    pub auto_run_ms: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { g: 3, delta: 1.0, k: 5, time_limit_ms: Some(200), eps: 40.0, min_pts: 5, auto_run_ms: Some(5000) }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.to_owned()));
        if self.g == 0 {
            return bad("g must be at least 1");
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.auto_run_ms == Some(0) {
            return bad("auto_run_ms must be positive");
        }
        self.dbscan()?;
        Ok(())
    }

    pub fn dbscan(&self) -> Result<DbscanParams, SessionError> {
        DbscanParams::new(self.eps, self.min_pts).map_err(|e| SessionError::InvalidConfig(e.to_string()))
    }

    pub fn time_limit(&self) -> Option<Duration> {
        self.time_limit_ms.map(Duration::from_millis)
    }
}

/// Offline structures shared by every session over one dataset.
#[derive(Debug)]
pub struct Engine {
    pub dataset: Dataset,
    pub quadtree: Quadtree,
    pub model: SimilarityModel,
    pub index: InvertedIndex,
    /// Largest pairwise distance in meters.
    pub diameter: f64,
}

impl Engine {
    pub fn build(dataset: Dataset, params: QuadtreeParams) -> Result<Self, SessionError> {
        let model = SimilarityModel::new(dataset.schema());
        Self::with_model(dataset, params, model)
    }

    pub fn with_model(dataset: Dataset, params: QuadtreeParams, model: SimilarityModel) -> Result<Self, SessionError> {
        let quadtree = Quadtree::build(dataset.points(), params)?;
        let index = InvertedIndex::build(dataset.points(), &model)?;
        let locations: Vec<_> = dataset.points().iter().map(|p| p.location).collect();
        let diameter = highlight::diameter(&locations);
        Ok(Engine { dataset, quadtree, model, index, diameter })
    }

    pub fn highlighter(&self) -> Highlighter<'_> {
        Highlighter::new(self.dataset.points(), &self.model, &self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighlightEntry {
    pub id: PointId,
    pub lat: f64,
    pub lon: f64,
    /// Similarity to the feedback vector.
    pub score: f64,
    pub values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighlightDocument {
    pub k: usize,
    pub anchor: Option<PointId>,
    pub points: Vec<HighlightEntry>,
    pub initial_diversity_m: f64,
    pub diversity_m: f64,
    /// Diversity over the dataset diameter.
    pub normalized_diversity: f64,
    pub swaps: usize,
    pub scanned: usize,
    pub completed: bool,
}

impl HighlightDocument {
    fn empty(k: usize) -> Self {
        HighlightDocument {
            k,
            anchor: None,
            points: Vec::new(),
            initial_diversity_m: 0.0,
            diversity_m: 0.0,
            normalized_diversity: 0.0,
            swaps: 0,
            scanned: 0,
            completed: true,
        }
    }

    fn new(engine: &Engine, f: &FeedbackVector, k: usize, r: &HighlightResult) -> Self {
        let schema = engine.dataset.schema();
        let points = r
            .indices
            .iter()
            .map(|&i| {
                let p = &engine.dataset.points()[i];
                HighlightEntry {
                    id: p.id,
                    lat: p.location.lat,
                    lon: p.location.lon,
                    score: engine.model.similarity_to_feedback(p, f),
                    values: p.labelled(schema).into_iter().map(|(a, v)| (a.to_owned(), v.to_owned())).collect(),
                }
            })
            .collect();
        let normalized = if engine.diameter > 0.0 { r.achieved_diversity / engine.diameter } else { 0.0 };
        HighlightDocument {
            k,
            anchor: Some(r.anchor_id),
            points,
            initial_diversity_m: r.initial_diversity,
            diversity_m: r.achieved_diversity,
            normalized_diversity: normalized,
            swaps: r.swaps,
            scanned: r.scanned,
            completed: r.completed,
        }
    }
}

/// Session statistics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunStats {
    pub regions: usize,
    pub idrs: usize,
    /// Distinct dataset points inside some IDR.
    pub points_in_idrs: usize,
    pub dataset_size: usize,
    pub coverage_pct: f64,
}

impl RunStats {
    pub fn new(regions: usize, idrs: usize, points_in_idrs: usize, dataset_size: usize) -> Self {
        let coverage_pct = coverage_pct(points_in_idrs, dataset_size);
        RunStats { regions, idrs, points_in_idrs, dataset_size, coverage_pct }
    }
}

/// `100 · matched / total`, 0 for an empty dataset.
pub fn coverage_pct(matched: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * matched as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub find_idrs_us: u64,
    pub match_points_us: u64,
    pub update_feedback_us: u64,
    pub get_highlights_us: u64,
}

impl StageTimings {
    pub fn total_us(&self) -> u64 {
        self.find_idrs_us + self.match_points_us + self.update_feedback_us + self.get_highlights_us
    }
}

/// Everything a pipeline run produced. Wall-clock timings are kept out of the
/// serialized form so documents depend only on the inputs.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineResult {
    pub run: u64,
    pub t_c: u64,
    pub moves: usize,
    pub viewport: ViewportRef,
    pub idrs: IdrDocument,
    pub matches: MatchResult,
    pub feedback: FeedbackSnapshot,
    pub highlights: HighlightDocument,
    pub stats: RunStats,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub idr_set: IdrSet,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Inputs of one run, copied out of the session so moves can keep arriving.
#[derive(Debug, Clone)]
pub struct PipelineInput {
    pub run: u64,
    pub t_c: u64,
    pub log: MoveLog,
    pub viewport: ViewportRef,
    pub config: SessionConfig,
    pub feedback: FeedbackVector,
}

fn micros(d: Duration) -> u64 {
    d.as_micros().min(u64::MAX as u128) as u64
}

/// Runs the four stages on `input`, returning the result and the updated vector.
pub fn execute(engine: &Engine, input: PipelineInput) -> Result<(PipelineResult, FeedbackVector), SessionError> {
    let PipelineInput { run, t_c, log, viewport, config, mut feedback } = input;
    let mut timings = StageTimings::default();
    let mut warnings = Vec::new();
    let schema = engine.dataset.schema();
    let points = engine.dataset.points();

    let t = Instant::now();
    let idr_set = find_idrs(&log, t_c, config.g, &config.dbscan()?)?;
    timings.find_idrs_us = micros(t.elapsed());

    let t = Instant::now();
    let matches =
        if idr_set.is_empty() { MatchResult::empty() } else { engine.quadtree.match_points(&idr_set, &viewport)? };
    timings.match_points_us = micros(t.elapsed());

    let t = Instant::now();
    feedback.apply(schema, matches.indices.iter().map(|&i| &points[i]), config.delta)?;
    timings.update_feedback_us = micros(t.elapsed());

    let t = Instant::now();
    let mut eligible = vec![true; points.len()];
    for &i in &matches.indices {
        eligible[i] = false;
    }
    let highlights = match engine.highlighter().get_highlights(&eligible, &feedback, config.k, config.time_limit()) {
        Ok(r) => HighlightDocument::new(engine, &feedback, config.k, &r),
        Err(HighlightError::EmptyEligibleSet) => {
            warnings.push(HighlightError::EmptyEligibleSet.to_string());
            HighlightDocument::empty(config.k)
        }
        Err(e) => return Err(e.into()),
    };
    timings.get_highlights_us = micros(t.elapsed());

    let stats = RunStats::new(idr_set.regions.len(), idr_set.idrs.len(), matches.all_matched.len(), points.len());
    let result = PipelineResult {
        run,
        t_c,
        moves: log.len(),
        viewport,
        idrs: idr_set.document(&viewport)?,
        matches,
        feedback: feedback.snapshot(schema),
        highlights,
        stats,
        warnings,
        idr_set,
        timings,
    };
    Ok((result, feedback))
}

/// State of one analyst session.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: SessionId,
    pub dataset_id: String,
    engine: Arc<Engine>,
    config: SessionConfig,
    viewports: Vec<ViewportRef>,
    log: MoveLog,
    /// Index into `viewports` under which each stored move was recorded.
    move_viewport: Vec<u32>,
    feedback: FeedbackVector,
    latest: Option<Arc<PipelineResult>>,
    runs: u64,
    moves_at_last_run: usize,
}

impl Session {
    pub fn new(
        id: SessionId,
        dataset_id: impl Into<String>,
        engine: Arc<Engine>,
        viewport: ViewportRef,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        viewport.validate()?;
        let feedback = FeedbackVector::new(engine.dataset.schema());
        Ok(Session {
            id,
            dataset_id: dataset_id.into(),
            engine,
            config,
            viewports: vec![viewport],
            log: MoveLog::new(0),
            move_viewport: Vec::new(),
            feedback,
            latest: None,
            runs: 0,
            moves_at_last_run: 0,
        })
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn viewport(&self) -> ViewportRef {
        *self.viewports.last().expect("a session always has a viewport")
    }

    pub fn log(&self) -> &MoveLog {
        &self.log
    }

    pub fn feedback(&self) -> &FeedbackVector {
        &self.feedback
    }

    pub fn latest(&self) -> Option<&Arc<PipelineResult>> {
        self.latest.as_ref()
    }

    pub fn runs(&self) -> u64 {
        self.runs
    }

    /// True when moves arrived since the last run.
    pub fn has_new_moves(&self) -> bool {
        self.log.len() > self.moves_at_last_run
    }

    /// Stores the sample unless it comes less than 200 ms after the last stored one.
    pub fn ingest_move(&mut self, m: MovePoint) -> bool {
        let accepted = self.log.try_push(m);
        if accepted {
            self.move_viewport.push((self.viewports.len() - 1) as u32);
        }
        accepted
    }

    pub fn update_viewport(&mut self, viewport: ViewportRef) -> Result<(), SessionError> {
        viewport.validate()?;
        if viewport != self.viewport() {
            self.viewports.push(viewport);
        }
        Ok(())
    }

    /// Stored moves expressed in the current viewport's pixel space.
    pub fn current_log(&self) -> Result<MoveLog, SessionError> {
        let current = self.viewports.len() - 1;
        let target = self.viewport();
        let mut error = None;
        let mut i = 0;
        let log = self.log.map_positions(|m| {
            let recorded = self.move_viewport[i] as usize;
            i += 1;
            if recorded == current {
                return *m;
            }
            match pixel_to_geo(m, &self.viewports[recorded]).and_then(|geo| geo_to_pixel(&geo, &target)) {
                Ok(p) => MovePoint::new(p.x, p.y, m.t),
                Err(e) => {
                    error.get_or_insert(e);
                    *m
                }
            }
        });
        match error {
            Some(e) => Err(e.into()),
            None => Ok(log),
        }
    }

    /// Copies out what a run at `t_c` needs.
    pub fn snapshot(&self, t_c: u64) -> Result<PipelineInput, SessionError> {
        Ok(PipelineInput {
            run: self.runs + 1,
            t_c,
            log: self.current_log()?,
            viewport: self.viewport(),
            config: self.config,
            feedback: self.feedback.clone(),
        })
    }

    /// Installs a finished run.
    pub fn commit(&mut self, result: PipelineResult, feedback: FeedbackVector) -> Arc<PipelineResult> {
        self.runs = result.run;
        self.moves_at_last_run = result.moves.max(self.moves_at_last_run);
        self.feedback = feedback;
        let result = Arc::new(result);
        self.latest = Some(result.clone());
        result
    }

    /// Snapshot, execute and commit in one step.
    pub fn run_pipeline(&mut self, t_c: u64) -> Result<Arc<PipelineResult>, SessionError> {
        let input = self.snapshot(t_c)?;
        let (result, feedback) = execute(&self.engine, input)?;
        Ok(self.commit(result, feedback))
    }

    /// Highlights for the current feedback, excluding the latest run's IDR points.
    pub fn highlights(&self, k: Option<usize>) -> Result<(HighlightDocument, Vec<String>), SessionError> {
        let k = k.unwrap_or(self.config.k);
        if k == 0 {
            return Err(HighlightError::InvalidK.into());
        }
        let n = self.engine.dataset.len();
        let mut eligible = vec![true; n];
        if let Some(latest) = &self.latest {
            for &i in &latest.matches.indices {
                eligible[i] = false;
            }
        }
        match self.engine.highlighter().get_highlights(&eligible, &self.feedback, k, self.config.time_limit()) {
            Ok(r) => Ok((HighlightDocument::new(&self.engine, &self.feedback, k, &r), Vec::new())),
            Err(HighlightError::EmptyEligibleSet) => {
                Ok((HighlightDocument::empty(k), vec![HighlightError::EmptyEligibleSet.to_string()]))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Clears moves, feedback and results; keeps the viewport and config.
    pub fn reset(&mut self) {
        let viewport = self.viewport();
        self.viewports = vec![viewport];
        self.log = MoveLog::new(0);
        self.move_viewport.clear();
        self.feedback = FeedbackVector::new(self.engine.dataset.schema());
        self.latest = None;
        self.runs = 0;
        self.moves_at_last_run = 0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub id: String,
    pub points: usize,
    pub attributes: Vec<String>,
    pub facets: usize,
    pub bounds: GeoBounds,
}

/// A live session plus the locks that serialize its pipeline runs.
#[derive(Debug)]
pub struct SessionHandle {
    state: Mutex<Session>,
    run_lock: Mutex<()>,
    created: Instant,
    requested: AtomicU64,
    completed: AtomicU64,
}

impl SessionHandle {
    fn new(session: Session) -> Self {
        SessionHandle {
            state: Mutex::new(session),
            run_lock: Mutex::new(()),
            created: Instant::now(),
            requested: AtomicU64::new(0),
            completed: AtomicU64::new(0),
        }
    }

    pub fn lock(&self) -> parking_lot::MutexGuard<'_, Session> {
        self.state.lock()
    }

    /// Milliseconds since the session was created.
    pub fn elapsed_ms(&self) -> u64 {
        micros(self.created.elapsed()) / 1000
    }

    /// Runs the pipeline with `t_c` = now, never holding the state lock while
    /// computing. Requests that queue behind a run which started after them
    /// receive that run's result instead of starting another.
    pub fn run(&self) -> Result<Arc<PipelineResult>, SessionError> {
        let ticket = self.requested.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = self.run_lock.lock();
        if self.completed.load(Ordering::SeqCst) >= ticket {
            if let Some(latest) = self.state.lock().latest.clone() {
                return Ok(latest);
            }
        }
        let started = self.requested.load(Ordering::SeqCst);
        let (input, engine) = {
            let s = self.state.lock();
            let t_c = self.elapsed_ms().max(s.log.last_t().unwrap_or(0));
            (s.snapshot(t_c)?, s.engine.clone())
        };
        let (result, feedback) = execute(&engine, input)?;
        let result = self.state.lock().commit(result, feedback);
        self.completed.store(started, Ordering::SeqCst);
        Ok(result)
    }
}

/// Registry of datasets and live sessions.
#[derive(Debug, Default)]
pub struct SessionManager {
    datasets: BTreeMap<String, Arc<Engine>>,
    sessions: RwLock<HashMap<SessionId, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

impl SessionManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_dataset(&mut self, id: impl Into<String>, engine: Arc<Engine>) {
        self.datasets.insert(id.into(), engine);
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.datasets
            .iter()
            .map(|(id, e)| DatasetInfo {
                id: id.clone(),
                points: e.dataset.len(),
                attributes: e.dataset.schema().attributes().iter().map(|a| a.name.clone()).collect(),
                facets: e.dataset.schema().facet_count(),
                bounds: *e.dataset.bounds(),
            })
            .collect()
    }

    pub fn engine(&self, dataset_id: &str) -> Option<&Arc<Engine>> {
        self.datasets.get(dataset_id)
    }

    /// Creates a session; without a viewport one is fitted to the dataset.
    pub fn create(
        &self,
        dataset_id: &str,
        viewport: Option<ViewportRef>,
        config: SessionConfig,
    ) -> Result<SessionId, SessionError> {
        let engine = self.datasets.get(dataset_id).ok_or_else(|| SessionError::UnknownDataset(dataset_id.to_owned()))?;
        let viewport = match viewport {
            Some(v) => v,
            None => ViewportRef::fit(engine.dataset.bounds(), 1024.0, 768.0)?,
        };
        let id = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        let session = Session::new(id, dataset_id, engine.clone(), viewport, config)?;
        self.sessions.write().insert(id, Arc::new(SessionHandle::new(session)));
        Ok(id)
    }

    pub fn get(&self, id: SessionId) -> Result<Arc<SessionHandle>, SessionError> {
        self.sessions.read().get(&id).cloned().ok_or(SessionError::UnknownSession(id))
    }

    pub fn remove(&self, id: SessionId) -> Result<(), SessionError> {
        self.sessions.write().remove(&id).map(|_| ()).ok_or(SessionError::UnknownSession(id))
    }

    pub fn ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<_> = self.sessions.read().keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// Stores every accepted move, returning how many were accepted.
    pub fn ingest_moves(&self, id: SessionId, moves: &[MovePoint]) -> Result<usize, SessionError> {
        let handle = self.get(id)?;
        let mut s = handle.lock();
        Ok(moves.iter().filter(|m| s.ingest_move(**m)).count())
    }

    pub fn run(&self, id: SessionId) -> Result<Arc<PipelineResult>, SessionError> {
        self.get(id)?.run()
    }
}
