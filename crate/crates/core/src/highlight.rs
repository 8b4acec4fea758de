//! Similar-and-diverse highlight selection.
//!
//! Similarity of a point to the feedback vector is the mean over attributes of
//! a per-attribute score; point-to-point similarity is likewise averaged over
//! attributes. Both are pluggable per attribute through
//! [`AttributeSimilarity`]. Diversity of a set is the mean pairwise haversine
//! distance of its members.
//!
//! Selection anchors on the eligible point most similar to the feedback,
//! seeds the result with the head of that point's ranked list, then walks the
//! rest of the list swapping in any candidate that strictly raises diversity
//! until the list ends or the time budget runs out.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::feedback::{AttributeSchema, FeedbackVector};
use crate::geometry::{haversine_distance, GeoPoint};
use crate::ingestion::{PointId, PointRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HighlightError {
    #[error("every point is inside the current IDRs, nothing left to highlight")]
    EmptyEligibleSet,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("an inverted index needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("eligibility mask has {found} entries for {expected} points")]
    MaskMismatch { expected: usize, found: usize },
}

/// Per-attribute similarity functions.
pub trait AttributeSimilarity: Send + Sync + fmt::Debug {
    /// Score of a point's value against this attribute's slice of the
    /// feedback weights. The default is the value's weight over the largest
    /// weight of the attribute, 0 when the attribute has no feedback.
    fn to_feedback(&self, value: Option<u32>, weights: &[f64]) -> f64 {
        let Some(v) = value else { return 0.0 };
        let max = weights.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            weights.get(v as usize).copied().unwrap_or(0.0) / max
        } else {
            0.0
        }
    }

    /// Score in [0, 1] between two values of this attribute.
    fn between(&self, a: Option<u32>, b: Option<u32>, domain_len: usize) -> f64;
}

/// Exact value (or bin) agreement.
#[derive(Debug, Clone, Copy, Default)]
pub struct ValueAgreement;

impl AttributeSimilarity for ValueAgreement {
    fn between(&self, a: Option<u32>, b: Option<u32>, _domain_len: usize) -> f64 {
        match (a, b) {
            (Some(a), Some(b)) if a == b => 1.0,
            _ => 0.0,
        }
    }
}

/// Closeness of rank for ordered domains: `1 - |i - j| / (n - 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrdinalProximity;

impl AttributeSimilarity for OrdinalProximity {
    fn between(&self, a: Option<u32>, b: Option<u32>, domain_len: usize) -> f64 {
        match (a, b) {
            (Some(a), Some(b)) if domain_len > 1 => {
                1.0 - (a as f64 - b as f64).abs() / (domain_len - 1) as f64
            }
            (Some(a), Some(b)) => f64::from(a == b),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimilarityModel {
    ranges: Vec<Range<usize>>,
    functions: Vec<Arc<dyn AttributeSimilarity>>,
}

impl SimilarityModel {
    /// [`ValueAgreement`] on every attribute.
    pub fn new(schema: &AttributeSchema) -> Self {
        let agreement: Arc<dyn AttributeSimilarity> = Arc::new(ValueAgreement);
        SimilarityModel {
            ranges: (0..schema.len()).map(|a| schema.facet_range(a)).collect(),
            functions: vec![agreement; schema.len()],
        }
    }

    pub fn with_attribute(mut self, attr: usize, function: Arc<dyn AttributeSimilarity>) -> Self {
        self.functions[attr] = function;
        self
    }

    /// Mean per-attribute score of `p` against `f`, in [0, 1].
    pub fn similarity_to_feedback(&self, p: &PointRecord, f: &FeedbackVector) -> f64 {
        if self.functions.is_empty() {
            return 0.0;
        }
        let w = f.weights();
        let total: f64 = self
            .functions
            .iter()
            .zip(&self.ranges)
            .zip(&p.values)
            .map(|((sim, range), v)| sim.to_feedback(*v, &w[range.clone()]))
            .sum();
        total / self.functions.len() as f64
    }

    /// Mean per-attribute agreement of two points, in [0, 1].
    pub fn pairwise(&self, p: &PointRecord, q: &PointRecord) -> f64 {
        pairwise_values(&self.functions, &self.ranges, &p.values, &q.values)
    }
}

fn pairwise_values(
    functions: &[Arc<dyn AttributeSimilarity>],
    ranges: &[Range<usize>],
    a: &[Option<u32>],
    b: &[Option<u32>],
) -> f64 {
    if functions.is_empty() {
        return 0.0;
    }
    let total: f64 = functions
        .iter()
        .zip(ranges)
        .zip(a.iter().zip(b))
        .map(|((sim, range), (x, y))| sim.between(*x, *y, range.len()))
        .sum();
    total / functions.len() as f64
}

/// Mean pairwise haversine distance in meters; 0 for fewer than two points.
pub fn diversity(points: &[GeoPoint]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += haversine_distance(&points[i], &points[j]);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Largest pairwise distance in the set, in meters.
pub fn diameter(points: &[GeoPoint]) -> f64 {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            points[i + 1..]
                .iter()
                .map(|q| haversine_distance(&points[i], q))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// For each point, every other point by descending similarity, ties broken
/// by ascending point id.
///
/// Points with the same attribute values have the same ranking, so one row is
/// stored per distinct value signature and a point's own entry is skipped
/// when its list is read.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    class_of: Vec<u32>,
    rows: Vec<Vec<u32>>,
}

impl InvertedIndex {
    pub fn build(points: &[PointRecord], model: &SimilarityModel) -> Result<Self, HighlightError> {
        let n = points.len();
        if n < 2 {
            return Err(HighlightError::TooFewPoints(n));
        }
        let mut classes: HashMap<&[Option<u32>], u32> = HashMap::new();
        let mut representatives = Vec::new();
        let class_of: Vec<u32> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                *classes.entry(&p.values).or_insert_with(|| {
                    representatives.push(i);
                    (representatives.len() - 1) as u32
                })
            })
            .collect();

        let mut by_id: Vec<u32> = (0..n as u32).collect();
        by_id.sort_by_key(|&i| points[i as usize].id);

        let rows = representatives
            .par_iter()
            .map(|&rep| {
                let sims: Vec<f64> = representatives
                    .iter()
                    .map(|&other| model.pairwise(&points[rep], &points[other]))
                    .collect();
                let mut row = by_id.clone();
                // stable: equal similarity keeps ascending id order
                row.sort_by(|&a, &b| sims[class_of[b as usize] as usize].total_cmp(&sims[class_of[a as usize] as usize]));
                row
            })
            .collect();
        Ok(InvertedIndex { class_of, rows })
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    /// Number of distinct rows actually stored.
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Ranked list of point `p` (by position in the dataset), excluding `p`.
    pub fn list(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[self.class_of[p] as usize]
            .iter()
            .map(|&q| q as usize)
            .filter(move |&q| q != p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighlightResult {
    /// Dataset position of the anchor point.
    pub anchor: usize,
    pub anchor_id: PointId,
    /// Dataset positions of the selected points.
    pub indices: Vec<usize>,
    pub points: Vec<PointId>,
    pub initial_diversity: f64,
    pub achieved_diversity: f64,
    /// Diversity after seeding and after every accepted swap.
    pub diversity_trace: Vec<f64>,
    pub swaps: usize,
    /// Candidates examined after seeding.
    pub scanned: usize,
    /// True when the ranked list was scanned to its end.
    pub completed: bool,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Read-only view over the offline structures needed by selection.
#[derive(Debug, Clone, Copy)]
pub struct Highlighter<'a> {
    pub points: &'a [PointRecord],
    pub model: &'a SimilarityModel,
    pub index: &'a InvertedIndex,
}

impl<'a> Highlighter<'a> {
    pub fn new(points: &'a [PointRecord], model: &'a SimilarityModel, index: &'a InvertedIndex) -> Self {
        Highlighter { points, model, index }
    }

    /// Most similar eligible point to `f`, lowest id on ties. With an all-zero
    /// vector every score is 0, so this is the lowest-id eligible point.
    pub fn anchor(&self, eligible: &[bool], f: &FeedbackVector) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            if !eligible[i] {
                continue;
            }
            let s = self.model.similarity_to_feedback(p, f);
            let better = match best {
                None => true,
                Some((b, bs)) => s > bs || (s == bs && p.id < self.points[b].id),
            };
            if better {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Selects up to `k` eligible points. `time_limit = None` scans the whole list.
    pub fn get_highlights(
        &self,
        eligible: &[bool],
        f: &FeedbackVector,
        k: usize,
        time_limit: Option<Duration>,
    ) -> Result<HighlightResult, HighlightError> {
        let start = Instant::now();
        if k == 0 {
            return Err(HighlightError::InvalidK);
        }
        if eligible.len() != self.points.len() {
            return Err(HighlightError::MaskMismatch { expected: self.points.len(), found: eligible.len() });
        }
        let anchor = self.anchor(eligible, f).ok_or(HighlightError::EmptyEligibleSet)?;

        // the anchor heads its own list: it is its own most similar point
        let mut sequence = std::iter::once(anchor)
            .chain(self.index.list(anchor))
            .filter(|&q| eligible[q]);
        let mut selected: Vec<usize> = sequence.by_ref().take(k).collect();
        let loc = |i: usize| self.points[i].location;
        let mut locations: Vec<GeoPoint> = selected.iter().map(|&i| loc(i)).collect();
        let mut current = diversity(&locations);
        let initial = current;
        let mut trace = vec![current];

        let mut scanned = 0;
        let mut swaps = 0;
        let mut completed = true;
        let m = selected.len();
        let pairs = (m * m.saturating_sub(1) / 2).max(1) as f64;
        // row sums of the pairwise distance matrix of the selection
        let mut row_sums: Vec<f64> = (0..m)
            .map(|j| (0..m).filter(|&i| i != j).map(|i| haversine_distance(&locations[i], &locations[j])).sum())
            .collect();
        let mut trial = locations.clone();
        let mut to_candidate = vec![0.0; m];

        for cand in sequence {
            if time_limit.is_some_and(|limit| start.elapsed() >= limit) {
                completed = false;
                break;
            }
            scanned += 1;
            if m < 2 {
                continue;
            }
            let c = loc(cand);
            for (d, l) in to_candidate.iter_mut().zip(&locations) {
                *d = haversine_distance(&c, l);
            }
            let to_all: f64 = to_candidate.iter().sum();
            let sum = current * pairs;
            for j in 0..m {
                let estimate = (sum - row_sums[j] + to_all - to_candidate[j]) / pairs;
                // cheap screen; the decision is made on the exact recomputation
                if estimate <= current - current.abs() * 1e-9 {
                    continue;
                }
                trial.copy_from_slice(&locations);
                trial[j] = c;
                let d = diversity(&trial);
                if d > current {
                    selected[j] = cand;
                    locations[j] = c;
                    current = d;
                    trace.push(d);
                    swaps += 1;
                    for (i, rs) in row_sums.iter_mut().enumerate() {
                        *rs = (0..m).filter(|&q| q != i).map(|q| haversine_distance(&locations[i], &locations[q])).sum();
                    }
                    break;
                }
            }
        }

        Ok(HighlightResult {
            anchor,
            anchor_id: self.points[anchor].id,
            points: selected.iter().map(|&i| self.points[i].id).collect(),
            indices: selected,
            initial_diversity: initial,
            achieved_diversity: current,
            diversity_trace: trace,
            swaps,
            scanned,
            completed,
            elapsed: start.elapsed(),
        })
    }
}
