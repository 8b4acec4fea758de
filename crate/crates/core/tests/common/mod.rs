//! Independent reference implementations used by the property and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;

use hoverscope::clustering::DbscanParams;
use hoverscope::feedback::{Attribute, AttributeSchema, FeedbackVector};
use hoverscope::geometry::{GeoPoint, Pixel};
use hoverscope::ingestion::{PointId, PointRecord};
use rand::Rng;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn d2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Jarvis march; counter-clockwise, collinear points skipped. Fewer than
/// three vertices means the input is degenerate.
pub fn gift_wrap(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let start = pts[0];
    let mut hull = vec![start];
    let mut p = start;
    loop {
        let mut q = if pts[0] == p { pts[1] } else { pts[0] };
        for &r in &pts {
            if r == p {
                continue;
            }
            let c = cross(p, q, r);
            // r is clockwise of p→q, or collinear and farther
            if c < 0.0 || (c == 0.0 && d2(p, r) > d2(p, q)) {
                q = r;
            }
        }
        if q == start {
            break;
        }
        hull.push(q);
        p = q;
        if hull.len() > pts.len() {
            panic!("gift wrapping did not close");
        }
    }
    if hull.len() >= 3 && hull.iter().all(|&h| cross(hull[0], hull[1], h) == 0.0) {
        return hull[..2].to_vec();
    }
    hull
}

/// Even-odd ray casting.
pub fn ray_cast(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Distance from `p` to segment `a`–`b`.
pub fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let l2 = d2(a, b);
    if l2 == 0.0 {
        return d2(a, p).sqrt();
    }
    let t = (((p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1)) / l2).clamp(0.0, 1.0);
    d2(p, (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))).sqrt()
}

pub fn boundary_distance(poly: &[(f64, f64)], p: (f64, f64)) -> f64 {
    let n = poly.len();
    (0..n).map(|i| segment_distance(poly[i], poly[(i + 1) % n], p)).fold(f64::INFINITY, f64::min)
}

pub fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a.0 * b.1 - b.0 * a.1;
    }
    (s / 2.0).abs()
}

fn inside_convex(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= 0.0)
}

fn segment_intersection(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> Option<(f64, f64)> {
    let r = (b.0 - a.0, b.1 - a.1);
    let s = (d.0 - c.0, d.1 - c.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let t = ((c.0 - a.0) * s.1 - (c.1 - a.1) * s.0) / denom;
    let u = ((c.0 - a.0) * r.1 - (c.1 - a.1) * r.0) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some((a.0 + t * r.0, a.1 + t * r.1))
}

/// Area of the intersection of two counter-clockwise convex polygons: hull of
/// the vertices of each inside the other plus all edge crossings.
pub fn intersection_area(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    pts.extend(a.iter().copied().filter(|&p| inside_convex(b, p)));
    pts.extend(b.iter().copied().filter(|&p| inside_convex(a, p)));
    for i in 0..a.len() {
        for j in 0..b.len() {
            if let Some(x) = segment_intersection(a[i], a[(i + 1) % a.len()], b[j], b[(j + 1) % b.len()]) {
                pts.push(x);
            }
        }
    }
    let hull = gift_wrap(&pts);
    if hull.len() < 3 {
        0.0
    } else {
        shoelace(&hull)
    }
}

pub fn tuples(points: &[Pixel]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (p.x, p.y)).collect()
}

/// Cluster structure implied by the eps-graph: core points, the connected
/// components of core points, and for every point the set of components it
/// can be reached from.
pub struct DensityOracle {
    pub core: Vec<bool>,
    /// Component of each core point.
    pub component: Vec<Option<usize>>,
    /// Components reachable from each point (core points: their own).
    pub reachable_from: Vec<Vec<usize>>,
    pub components: usize,
}

pub fn density_oracle(points: &[(f64, f64)], params: &DbscanParams) -> DensityOracle {
    let n = points.len();
    let e2 = params.eps * params.eps;
    let near = |i: usize, j: usize| d2(points[i], points[j]) <= e2;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= params.min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut x = x;
        while parent[x] != r {
            let next = parent[x];
            parent[x] = r;
            x = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut ids = HashMap::new();
    let mut component = vec![None; n];
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            let next = ids.len();
            component[i] = Some(*ids.entry(root).or_insert(next));
        }
    }
    let reachable_from = (0..n)
        .map(|i| {
            let mut cs: Vec<usize> = (0..n).filter(|&j| core[j] && near(i, j)).filter_map(|j| component[j]).collect();
            cs.sort_unstable();
            cs.dedup();
            cs
        })
        .collect();
    DensityOracle { core, component, reachable_from, components: ids.len() }
}

/// Mean over attributes of weight(value) / max weight of the attribute.
pub fn feedback_similarity(schema: &AttributeSchema, f: &FeedbackVector, p: &PointRecord) -> f64 {
    let w = f.weights();
    let m = schema.len();
    if m == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (a, v) in p.values.iter().enumerate() {
        let range = schema.facet_range(a);
        let max = w[range.clone()].iter().copied().fold(0.0, f64::max);
        if let (Some(v), true) = (v, max > 0.0) {
            total += w[range.start + *v as usize] / max;
        }
    }
    total / m as f64
}

pub fn agreement(p: &PointRecord, q: &PointRecord) -> f64 {
    let m = p.values.len();
    if m == 0 {
        return 0.0;
    }
    let same = p.values.iter().zip(&q.values).filter(|(a, b)| a.is_some() && a == b).count();
    same as f64 / m as f64
}

pub fn haversine(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6_371_000.0 * h.sqrt().min(1.0).asin()
}

pub fn mean_pairwise(points: &[&PointRecord]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += haversine(&points[i].location, &points[j].location);
        }
    }
    s / (n * (n - 1) / 2) as f64
}

/// Brute-force argmax of feedback similarity, lowest id on ties.
pub fn anchor(schema: &AttributeSchema, f: &FeedbackVector, points: &[PointRecord], eligible: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate().filter(|(i, _)| eligible[*i]) {
        let s = feedback_similarity(schema, f, p);
        match best {
            Some((b, bs)) if s < bs || (s == bs && points[b].id < p.id) => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|b| b.0)
}

/// Everyone but `p`, by descending agreement with `p`, then ascending id.
pub fn ranked_list(points: &[PointRecord], p: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..points.len()).filter(|&q| q != p).collect();
    others.sort_by(|&a, &b| {
        agreement(&points[p], &points[b])
            .total_cmp(&agreement(&points[p], &points[a]))
            .then(points[a].id.cmp(&points[b].id))
    });
    others
}

/// Straightforward greedy scan without time limit: selected positions plus
/// the diversity after seeding and after each swap.
pub fn greedy(points: &[PointRecord], start: usize, eligible: &[bool], k: usize) -> (Vec<usize>, Vec<f64>) {
    let seq: Vec<usize> =
        std::iter::once(start).chain(ranked_list(points, start)).filter(|&q| eligible[q]).collect();
    let mut sel: Vec<usize> = seq.iter().copied().take(k).collect();
    let div = |s: &[usize]| mean_pairwise(&s.iter().map(|&i| &points[i]).collect::<Vec<_>>());
    let mut cur = div(&sel);
    let mut trace = vec![cur];
    for &c in seq.iter().skip(sel.len()) {
        for j in 0..sel.len() {
            let mut trial = sel.clone();
            trial[j] = c;
            let d = div(&trial);
            if d > cur {
                sel = trial;
                cur = d;
                trace.push(d);
                break;
            }
        }
    }
    (sel, trace)
}

/// Random schema with `attrs` categorical attributes of 2..=max_values values.
pub fn random_schema<R: Rng>(rng: &mut R, attrs: usize, max_values: usize) -> AttributeSchema {
    let labels = ["a", "b", "c", "d", "e", "f", "g", "h"];
    AttributeSchema::new(
        (0..attrs)
            .map(|i| {
                let n = rng.random_range(2..=max_values.clamp(2, labels.len()));
                Attribute::categorical(&format!("attr{i}"), &labels[..n])
            })
            .collect(),
    )
}

pub fn random_points<R: Rng>(rng: &mut R, schema: &AttributeSchema, n: usize) -> Vec<PointRecord> {
    let mut ids: Vec<u64> = (1..=n as u64 * 3).collect();
    // shuffle so dataset order and id order differ
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    (0..n)
        .map(|i| PointRecord {
            id: PointId(ids[i]),
            location: GeoPoint::new(rng.random_range(48.80..48.92), rng.random_range(2.22..2.46)).unwrap(),
            values: schema
                .attributes()
                .iter()
                .map(|a| Some(rng.random_range(0..a.values.len() as u32)))
                .collect(),
        })
        .collect()
}
