//! Interesting dense regions: cluster hulls of one time segment intersected
//! with the cluster hulls of every other segment.

use serde::Serialize;

use crate::clustering::{dbscan_cluster, segment_moves, ClusteringError, DbscanParams, MoveLog};
use crate::geometry::{
    convex_intersect_min_area, pixel_to_geo, quickhull, ConvexPolygon, GeoPoint, GeometryError,
    MovePoint, Pixel, ViewportRef, MIN_IDR_AREA_PX2,
};

/// Identifier of an IDR, unique within one [`IdrSet`]; numbered from 1.
pub type IdrId = u32;

/// Convex hull of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub segment_index: usize,
    pub cluster_size: usize,
    pub polygon: ConvexPolygon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Idr {
    pub id: IdrId,
    pub region: ConvexPolygon,
    /// Segment indexes of the two intersected hulls, `first < second`.
    pub source_segments: (usize, usize),
    /// Positions of the two hulls in [`IdrSet::regions`].
    pub source_regions: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdrSet {
    pub computed_at: u64,
    pub segments: usize,
    /// Every non-degenerate cluster hull, by segment then cluster order.
    pub regions: Vec<Region>,
    pub idrs: Vec<Idr>,
}

impl IdrSet {
    pub fn empty(computed_at: u64, segments: usize) -> Self {
        IdrSet { computed_at, segments, regions: Vec::new(), idrs: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.idrs.is_empty()
    }

    pub fn get(&self, id: IdrId) -> Option<&Idr> {
        self.idrs.iter().find(|r| r.id == id)
    }
}

/// Finds IDRs in the log snapshot taken at `t_c`.
///
/// Clusters whose members are collinear (or fewer than three distinct
/// positions) have no hull and are dropped. Pairs are visited as `i < j`
/// over segment indexes, then in hull creation order, and only overlaps of at
/// least [`MIN_IDR_AREA_PX2`] are kept.
pub fn find_idrs(
    log: &MoveLog,
    t_c: u64,
    g: usize,
    params: &DbscanParams,
) -> Result<IdrSet, ClusteringError> {
    params.validate()?;
    let segments = segment_moves(log, t_c, g)?;
    let mut regions = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        for cluster in dbscan_cluster(seg, i, params)? {
            if let Ok(polygon) = quickhull(&cluster.pixels()) {
                regions.push(Region { segment_index: i, cluster_size: cluster.members.len(), polygon });
            }
        }
    }

    let mut idrs = Vec::new();
    for (a, ra) in regions.iter().enumerate() {
        for (b, rb) in regions.iter().enumerate().skip(a + 1) {
            if ra.segment_index == rb.segment_index {
                continue;
            }
            if let Some(region) = convex_intersect_min_area(&ra.polygon, &rb.polygon, MIN_IDR_AREA_PX2) {
                idrs.push((ra.segment_index, rb.segment_index, a, b, region));
            }
        }
    }
    // regions are already sorted by segment, so this only groups by (i, j)
    idrs.sort_by_key(|&(i, j, a, b, _)| (i, j, a, b));
    let idrs = idrs
        .into_iter()
        .enumerate()
        .map(|(n, (i, j, a, b, region))| Idr {
            id: n as IdrId + 1,
            region,
            source_segments: (i, j),
            source_regions: (a, b),
        })
        .collect();
    Ok(IdrSet { computed_at: t_c, segments: g, regions, idrs })
}

/// Serializable view of an [`IdrSet`] with vertices in both pixel and geo space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdrDocument {
    pub computed_at: u64,
    pub segments: usize,
    pub regions: usize,
    pub idrs: Vec<IdrEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdrEntry {
    pub id: IdrId,
    pub source_segments: (usize, usize),
    pub area_px2: f64,
    pub pixel: Vec<Pixel>,
    pub geo: Vec<GeoPoint>,
}

impl IdrSet {
    pub fn document(&self, viewport: &ViewportRef) -> Result<IdrDocument, GeometryError> {
        let idrs = self
            .idrs
            .iter()
            .map(|idr| {
                Ok(IdrEntry {
                    id: idr.id,
                    source_segments: idr.source_segments,
                    area_px2: idr.region.area(),
                    pixel: idr.region.vertices().to_vec(),
                    geo: polygon_to_geo(&idr.region, viewport)?,
                })
            })
            .collect::<Result<_, GeometryError>>()?;
        Ok(IdrDocument { computed_at: self.computed_at, segments: self.segments, regions: self.regions.len(), idrs })
    }
}

/// Geo vertices of a pixel polygon under `viewport`.
pub fn polygon_to_geo(poly: &ConvexPolygon, viewport: &ViewportRef) -> Result<Vec<GeoPoint>, GeometryError> {
    poly.vertices()
        .iter()
        .map(|v| pixel_to_geo(&MovePoint::new(v.x, v.y, 0), viewport))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::convex_intersect;

    /// A 5×5 grid of samples around `(cx, cy)` with 4 px spacing, spread over `[t0, t0 + 25·200)`.
    fn blob(cx: f64, cy: f64, t0: u64) -> Vec<MovePoint> {
        (0..25)
            .map(|k| {
                let (i, j) = ((k % 5) as f64, (k / 5) as f64);
                MovePoint::new(cx + 4.0 * (i - 2.0), cy + 4.0 * (j - 2.0), t0 + 200 * k as u64)
            })
            .collect()
    }

    fn params() -> DbscanParams {
        DbscanParams::new(10.0, 3).unwrap()
    }

    #[test]
    fn overlapping_pair_gives_one_idr() {
        let mut moves = blob(0.0, 0.0, 0);
        moves.extend(blob(6.0, 6.0, 10_000));
        let log = MoveLog::throttled(0, moves);
        let set = find_idrs(&log, 15_000, 2, &params()).unwrap();
        assert_eq!(set.regions.len(), 2);
        assert_eq!(set.idrs.len(), 1);
        let idr = &set.idrs[0];
        assert_eq!(idr.id, 1);
        assert_eq!(idr.source_segments, (0, 1));
        let expected = convex_intersect(&set.regions[0].polygon, &set.regions[1].polygon).unwrap();
        assert_eq!(idr.region, expected);
        // 16×16 squares offset by 6 overlap in a 10×10 square
        assert!((idr.region.area() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_hulls_give_nothing() {
        let mut moves = blob(0.0, 0.0, 0);
        moves.extend(blob(200.0, 0.0, 10_000));
        let set = find_idrs(&MoveLog::throttled(0, moves), 15_000, 2, &params()).unwrap();
        assert_eq!(set.regions.len(), 2);
        assert!(set.is_empty());
    }

    #[test]
    fn single_segment_and_empty_log() {
        let moves = blob(0.0, 0.0, 0);
        let set = find_idrs(&MoveLog::throttled(0, moves), 5_000, 1, &params()).unwrap();
        assert_eq!(set.regions.len(), 1);
        assert!(set.is_empty());
        let set = find_idrs(&MoveLog::new(0), 5_000, 3, &params()).unwrap();
        assert!(set.regions.is_empty() && set.is_empty());
    }

    #[test]
    fn collinear_cluster_is_dropped() {
        let line: Vec<MovePoint> =
            (0..10).map(|k| MovePoint::new(k as f64, 0.0, 200 * k as u64)).collect();
        let set = find_idrs(&MoveLog::throttled(0, line), 2_000, 1, &params()).unwrap();
        assert!(set.regions.is_empty());
    }

    #[test]
    fn same_segment_hulls_never_pair() {
        // a hollow ring of samples with a separate blob inside its hull
        let mut moves = Vec::new();
        let mut t = 0;
        for k in 0..60 {
            let s = 4.0 * (k % 15) as f64 - 30.0;
            let (x, y) = match k / 15 {
                0 => (s, -30.0),
                1 => (30.0, s),
                2 => (-s, 30.0),
                _ => (-30.0, -s),
            };
            moves.push(MovePoint::new(x, y, t));
            t += 200;
        }
        for m in blob(0.0, 0.0, t) {
            moves.push(m);
        }
        let set = find_idrs(&MoveLog::throttled(0, moves), 100_000, 1, &params()).unwrap();
        assert_eq!(set.regions.len(), 2);
        assert!(convex_intersect(&set.regions[0].polygon, &set.regions[1].polygon).is_some());
        assert!(set.is_empty());
    }

    #[test]
    fn geo_vertices() {
        let v = ViewportRef::new(0.0, 0.0, 1.0).unwrap();
        let poly = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 2.0).unwrap();
        let g = polygon_to_geo(&poly, &v).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.iter().any(|p| p.lat == 2.0 && p.lon == 1.0));
    }

    #[test]
    fn document_lists_both_spaces() {
        let mut moves = blob(0.0, 0.0, 0);
        moves.extend(blob(6.0, 6.0, 10_000));
        let set = find_idrs(&MoveLog::throttled(0, moves), 15_000, 2, &params()).unwrap();
        let v = ViewportRef::new(48.85, 2.35, 1e-4).unwrap();
        let doc = set.document(&v).unwrap();
        assert_eq!(doc.regions, 2);
        assert_eq!(doc.idrs[0].pixel.len(), doc.idrs[0].geo.len());
        let json = serde_json::to_value(&doc).unwrap();
        assert_eq!(json["idrs"][0]["source_segments"], serde_json::json!([0, 1]));
    }
}
