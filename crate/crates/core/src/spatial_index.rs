//! Quadtree over dataset locations and IDR point matching.
//!
//! The tree lives in geo space with longitude as x and latitude as y. A leaf
//! splits into four equal quarters once it holds more than `capacity` points,
//! unless it is already at `max_depth`. Points on a midline go to the east or
//! north child.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{geo_to_pixel_point, GeoPoint, GeometryError, ViewportRef, CONTAINS_TOLERANCE_PX};
use crate::idr::{IdrId, IdrSet};
use crate::ingestion::{PointId, PointRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialIndexError {
    #[error("cannot index an empty dataset")]
    EmptyDataset,
    #[error("leaf capacity must be at least 1")]
    InvalidCapacity,
    #[error("max depth must be at least 1")]
    InvalidMaxDepth,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QuadtreeParams {
    pub capacity: usize,
    pub max_depth: usize,
}

impl Default for QuadtreeParams {
    fn default() -> Self {
        QuadtreeParams { capacity: 64, max_depth: 12 }
    }
}

/// Axis-aligned rectangle in (lon, lat).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoRect {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoRect {
    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }

    fn mid(&self) -> (f64, f64) {
        ((self.min_lon + self.max_lon) / 2.0, (self.min_lat + self.max_lat) / 2.0)
    }

    /// Quarters in SW, SE, NW, NE order.
    fn quarters(&self) -> [GeoRect; 4] {
        let (mx, my) = self.mid();
        let r = |a, b, c, d| GeoRect { min_lon: a, min_lat: b, max_lon: c, max_lat: d };
        [
            r(self.min_lon, self.min_lat, mx, my),
            r(mx, self.min_lat, self.max_lon, my),
            r(self.min_lon, my, mx, self.max_lat),
            r(mx, my, self.max_lon, self.max_lat),
        ]
    }

    fn quadrant_of(&self, p: &GeoPoint) -> usize {
        let (mx, my) = self.mid();
        usize::from(p.lon >= mx) + 2 * usize::from(p.lat >= my)
    }

    fn padded(&self, dx: f64, dy: f64) -> GeoRect {
        GeoRect {
            min_lon: self.min_lon - dx,
            min_lat: self.min_lat - dy,
            max_lon: self.max_lon + dx,
            max_lat: self.max_lat + dy,
        }
    }

    /// Separating-axis test against a convex polygon given as (lon, lat) vertices.
    pub fn intersects_convex(&self, poly: &[(f64, f64)]) -> bool {
        if poly.is_empty() {
            return false;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in poly {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        if x1 < self.min_lon || x0 > self.max_lon || y1 < self.min_lat || y0 > self.max_lat {
            return false;
        }
        let corners = [
            (self.min_lon, self.min_lat),
            (self.max_lon, self.min_lat),
            (self.max_lon, self.max_lat),
            (self.min_lon, self.max_lat),
        ];
        let n = poly.len();
        for i in 0..n {
            let (ax, ay) = poly[i];
            let (bx, by) = poly[(i + 1) % n];
            let (nx, ny) = (by - ay, ax - bx);
            // polygon lies on the non-positive side of each outward normal
            let edge = nx * ax + ny * ay;
            if corners.iter().all(|&(cx, cy)| nx * cx + ny * cy > edge) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf(Vec<u32>),
    Branch([u32; 4]),
}

#[derive(Debug, Clone)]
struct Node {
    rect: GeoRect,
    depth: usize,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct Quadtree {
    nodes: Vec<Node>,
    leaf_of: Vec<u32>,
    ids: Vec<PointId>,
    locations: Vec<GeoPoint>,
    params: QuadtreeParams,
}

/// A leaf as seen from outside the tree.
#[derive(Debug, Clone, Copy)]
pub struct Leaf<'a> {
    pub rect: GeoRect,
    pub depth: usize,
    /// Dataset positions of the points in this leaf.
    pub points: &'a [u32],
}

impl Quadtree {
    pub fn build(points: &[PointRecord], params: QuadtreeParams) -> Result<Self, SpatialIndexError> {
        if points.is_empty() {
            return Err(SpatialIndexError::EmptyDataset);
        }
        if params.capacity == 0 {
            return Err(SpatialIndexError::InvalidCapacity);
        }
        if params.max_depth == 0 {
            return Err(SpatialIndexError::InvalidMaxDepth);
        }
        let locations: Vec<GeoPoint> = points.iter().map(|p| p.location).collect();
        let mut root = GeoRect {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for p in &locations {
            root.min_lon = root.min_lon.min(p.lon);
            root.min_lat = root.min_lat.min(p.lat);
            root.max_lon = root.max_lon.max(p.lon);
            root.max_lat = root.max_lat.max(p.lat);
        }
        let mut tree = Quadtree {
            nodes: vec![Node { rect: root, depth: 0, kind: NodeKind::Leaf(Vec::new()) }],
            leaf_of: vec![0; points.len()],
            ids: points.iter().map(|p| p.id).collect(),
            locations,
            params,
        };
        tree.fill(0, (0..points.len() as u32).collect());
        Ok(tree)
    }

    fn fill(&mut self, node: usize, members: Vec<u32>) {
        let Node { rect, depth, .. } = self.nodes[node];
        if members.len() <= self.params.capacity || depth >= self.params.max_depth {
            for &m in &members {
                self.leaf_of[m as usize] = node as u32;
            }
            self.nodes[node].kind = NodeKind::Leaf(members);
            return;
        }
        let mut parts: [Vec<u32>; 4] = Default::default();
        for m in members {
            parts[rect.quadrant_of(&self.locations[m as usize])].push(m);
        }
        let quarters = rect.quarters();
        let first = self.nodes.len() as u32;
        for q in quarters {
            self.nodes.push(Node { rect: q, depth: depth + 1, kind: NodeKind::Leaf(Vec::new()) });
        }
        self.nodes[node].kind = NodeKind::Branch([first, first + 1, first + 2, first + 3]);
        for (i, part) in parts.into_iter().enumerate() {
            self.fill(first as usize + i, part);
        }
    }

    pub fn params(&self) -> QuadtreeParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaf_of.is_empty()
    }

    pub fn root(&self) -> GeoRect {
        self.nodes[0].rect
    }

    pub fn leaves(&self) -> impl Iterator<Item = Leaf<'_>> {
        self.nodes.iter().filter_map(|n| match &n.kind {
            NodeKind::Leaf(points) => Some(Leaf { rect: n.rect, depth: n.depth, points }),
            NodeKind::Branch(_) => None,
        })
    }

    /// Leaf holding the point at dataset position `index`.
    pub fn leaf_of(&self, index: usize) -> Leaf<'_> {
        let n = &self.nodes[self.leaf_of[index] as usize];
        match &n.kind {
            NodeKind::Leaf(points) => Leaf { rect: n.rect, depth: n.depth, points },
            NodeKind::Branch(_) => unreachable!("membership always points at a leaf"),
        }
    }

    /// Points inside each IDR of `idrs`, drawn on the map under `viewport`.
    ///
    /// Leaves are pruned against the IDR's geo-projected outline; candidates
    /// are then tested exactly in pixel space.
    pub fn match_points(&self, idrs: &IdrSet, viewport: &ViewportRef) -> Result<MatchResult, GeometryError> {
        let mut matched = BTreeMap::new();
        let mut all = vec![false; self.len()];
        let mut stats = MatchStats::default();
        let cos = viewport.gamma.to_radians().cos();
        let pad_lat = viewport.scale * 1e-6;
        let pad_lon = pad_lat / cos;

        for idr in &idrs.idrs {
            let outline = idr
                .region
                .vertices()
                .iter()
                .map(|v| viewport.project_unclamped(*v).map(|(lat, lon)| (lon, lat)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut inside = Vec::new();
            let mut stack = vec![0usize];
            while let Some(n) = stack.pop() {
                let node = &self.nodes[n];
                if !node.rect.padded(pad_lon, pad_lat).intersects_convex(&outline) {
                    continue;
                }
                match &node.kind {
                    NodeKind::Branch(children) => stack.extend(children.iter().map(|&c| c as usize)),
                    NodeKind::Leaf(points) => {
                        stats.candidate_leaves += 1;
                        for &p in points {
                            stats.tests += 1;
                            let px = geo_to_pixel_point(&self.locations[p as usize], viewport)?;
                            if idr.region.contains_within(px, CONTAINS_TOLERANCE_PX) {
                                inside.push(p as usize);
                            }
                        }
                    }
                }
            }
            for &p in &inside {
                all[p] = true;
            }
            let mut ids: Vec<PointId> = inside.iter().map(|&p| self.ids[p]).collect();
            ids.sort_unstable();
            matched.insert(idr.id, ids);
        }

        let indices: Vec<usize> = (0..self.len()).filter(|&i| all[i]).collect();
        let mut all_matched: Vec<PointId> = indices.iter().map(|&i| self.ids[i]).collect();
        all_matched.sort_unstable();
        Ok(MatchResult { matched, all_matched, indices, stats })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchStats {
    /// Leaves whose rectangle met some IDR.
    pub candidate_leaves: usize,
    /// Exact containment tests performed.
    pub tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// Sorted point ids per IDR.
    pub matched: BTreeMap<IdrId, Vec<PointId>>,
    /// Sorted, deduplicated union of `matched`.
    pub all_matched: Vec<PointId>,
    /// Dataset positions of `all_matched`, ascending.
    #[serde(skip)]
    pub indices: Vec<usize>,
    pub stats: MatchStats,
}

impl MatchResult {
    pub fn empty() -> Self {
        MatchResult { matched: BTreeMap::new(), all_matched: Vec::new(), indices: Vec::new(), stats: MatchStats::default() }
    }
}
