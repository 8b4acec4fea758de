//! Time segmentation of the move log and density clustering within a segment.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{MovePoint, Pixel};

/// Minimum spacing between two stored moves, in milliseconds.
pub const THROTTLE_MS: u64 = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusteringError {
    #[error("eps must be a positive finite number of pixels, got {0}")]
    InvalidEps(f64),
    #[error("min_pts must be at least 2, got {0}")]
    InvalidMinPts(usize),
    #[error("the number of time segments must be at least 1")]
    NoSegments,
}

/// Time-ordered mouse samples, at least [`THROTTLE_MS`] apart.
///
/// `origin` is the session start on the same clock as the samples; segment
/// boundaries are measured from it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveLog {
    pub origin: u64,
    moves: Vec<MovePoint>,
}

impl MoveLog {
    pub fn new(origin: u64) -> Self {
        MoveLog { origin, moves: Vec::new() }
    }

    /// Builds a log from a raw stream, applying the throttle.
    pub fn throttled<I: IntoIterator<Item = MovePoint>>(origin: u64, stream: I) -> Self {
        let mut log = MoveLog::new(origin);
        for m in stream {
            log.try_push(m);
        }
        log
    }

    /// Stores `m` iff it is at least [`THROTTLE_MS`] after the last stored
    /// sample (the first sample is always stored).
    pub fn try_push(&mut self, m: MovePoint) -> bool {
        if !(m.x.is_finite() && m.y.is_finite()) || m.t < self.origin {
            return false;
        }
        if let Some(last) = self.moves.last() {
            if m.t < last.t || m.t - last.t < THROTTLE_MS {
                return false;
            }
        }
        self.moves.push(m);
        true
    }

    pub fn moves(&self) -> &[MovePoint] {
        &self.moves
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn last_t(&self) -> Option<u64> {
        self.moves.last().map(|m| m.t)
    }

    /// A copy with every sample passed through `f`, keeping timestamps.
    pub fn map_positions<F: FnMut(&MovePoint) -> MovePoint>(&self, mut f: F) -> MoveLog {
        MoveLog {
            origin: self.origin,
            moves: self.moves.iter().map(|m| MovePoint { t: m.t, ..f(m) }).collect(),
        }
    }

    fn from_subset(origin: u64, moves: Vec<MovePoint>) -> Self {
        MoveLog { origin, moves }
    }
}

/// Density parameters in pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 40.0, min_pts: 5 }
    }
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self, ClusteringError> {
        let p = DbscanParams { eps, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ClusteringError> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(ClusteringError::InvalidEps(self.eps));
        }
        if self.min_pts < 2 {
            return Err(ClusteringError::InvalidMinPts(self.min_pts));
        }
        Ok(())
    }
}

/// Splits the log into `g` equal spans of `[origin, t_c]`.
///
/// Segment `i` holds the moves with relative time in `[t_c·i/g, t_c·(i+1)/g]`;
/// a move sitting exactly on a boundary goes to the earlier segment. Moves
/// after `t_c` are not part of the snapshot and are left out.
pub fn segment_moves(log: &MoveLog, t_c: u64, g: usize) -> Result<Vec<MoveLog>, ClusteringError> {
    if g == 0 {
        return Err(ClusteringError::NoSegments);
    }
    let span = t_c.saturating_sub(log.origin) as u128;
    let g128 = g as u128;
    let mut out: Vec<Vec<MovePoint>> = vec![Vec::new(); g];
    for m in log.moves() {
        let Some(rel) = m.t.checked_sub(log.origin).map(u128::from) else {
            continue;
        };
        if rel > span {
            continue;
        }
        // smallest i with rel·g ≤ span·(i+1)
        let i = if span == 0 {
            0
        } else {
            let scaled = rel * g128;
            (scaled.div_ceil(span)).saturating_sub(1) as usize
        };
        out[i.min(g - 1)].push(*m);
    }
    Ok(out.into_iter().map(|v| MoveLog::from_subset(log.origin, v)).collect())
}

/// Role of each input sample after clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointLabel {
    Core(usize),
    Border(usize),
    Noise,
}

impl PointLabel {
    pub fn cluster(&self) -> Option<usize> {
        match *self {
            PointLabel::Core(c) | PointLabel::Border(c) => Some(c),
            PointLabel::Noise => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub segment_index: usize,
    /// Positions of the members in the clustered segment, ascending.
    pub member_indices: Vec<usize>,
    pub members: Vec<MovePoint>,
}

impl Cluster {
    pub fn pixels(&self) -> Vec<Pixel> {
        self.members.iter().map(MovePoint::pixel).collect()
    }
}

/// Uniform grid with `eps`-sized cells for radius queries.
struct Grid {
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[Pixel], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(*p, eps)).or_default().push(i);
        }
        Grid { eps, cells }
    }

    fn key(p: Pixel, eps: f64) -> (i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64)
    }

    /// Indices within `eps` of `points[i]` (itself included), ascending.
    fn neighbors(&self, points: &[Pixel], i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = points[i];
        let (cx, cy) = Self::key(p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(cell) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(cell.iter().copied().filter(|&j| points[j].dist2(p) <= eps2));
                }
            }
        }
        out.sort_unstable();
    }
}

/// DBSCAN labels under Euclidean distance.
///
/// A point is core when at least `min_pts` samples (itself included) lie
/// within `eps`. Seeds are visited in input order, so border points shared by
/// two clusters go to the one created first.
pub fn dbscan_labels(points: &[Pixel], params: &DbscanParams) -> Result<Vec<PointLabel>, ClusteringError> {
    params.validate()?;
    let n = points.len();
    let grid = Grid::new(points, params.eps);
    let mut nbuf = Vec::new();
    let core: Vec<bool> = (0..n)
        .map(|i| {
            grid.neighbors(points, i, &mut nbuf);
            nbuf.len() >= params.min_pts
        })
        .collect();

    let mut labels = vec![PointLabel::Noise; n];
    let mut next_cluster = 0;
    let mut queue = Vec::new();
    for seed in 0..n {
        if !core[seed] || labels[seed] != PointLabel::Noise {
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        labels[seed] = PointLabel::Core(c);
        queue.clear();
        queue.push(seed);
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            grid.neighbors(points, j, &mut nbuf);
            for &q in &nbuf {
                if labels[q] != PointLabel::Noise {
                    continue;
                }
                if core[q] {
                    labels[q] = PointLabel::Core(c);
                    queue.push(q);
                } else {
                    labels[q] = PointLabel::Border(c);
                }
            }
        }
    }
    Ok(labels)
}

/// Clusters one segment. Clusters are numbered in creation order.
pub fn dbscan_cluster(
    segment: &MoveLog,
    segment_index: usize,
    params: &DbscanParams,
) -> Result<Vec<Cluster>, ClusteringError> {
    let pixels: Vec<Pixel> = segment.moves().iter().map(MovePoint::pixel).collect();
    let labels = dbscan_labels(&pixels, params)?;
    let count = labels.iter().filter_map(PointLabel::cluster).max().map_or(0, |c| c + 1);
    let mut clusters: Vec<Cluster> = (0..count)
        .map(|_| Cluster { segment_index, member_indices: Vec::new(), members: Vec::new() })
        .collect();
    for (i, label) in labels.iter().enumerate() {
        if let Some(c) = label.cluster() {
            clusters[c].member_indices.push(i);
            clusters[c].members.push(segment.moves()[i]);
        }
    }
    Ok(clusters)
}
