//! Planar and spherical geometry shared by every pipeline stage.
//!
//! Two coordinate planes are in play. The *interaction* plane is the pixel
//! plane of the analyst's display, with the origin at the viewport center,
//! `x` growing to the right and `y` growing upwards. The *spatial* plane holds
//! latitudes and longitudes in degrees. A [`ViewportRef`] links them with an
//! equirectangular projection around the viewport center.
//!
//! Convex polygons always live in the pixel plane and are stored
//! counter-clockwise with no repeated or collinear vertices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used by [`haversine_distance`], in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Intersections smaller than this (in px²) are too thin to be a region.
pub const MIN_IDR_AREA_PX2: f64 = 1.0;

/// Boundary tolerance of [`ConvexPolygon::contains`], in pixels.
pub const CONTAINS_TOLERANCE_PX: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid coordinates lat={lat}, lon={lon}")]
    InvalidGeoPoint { lat: f64, lon: f64 },
    #[error("invalid viewport: {0}")]
    InvalidViewport(&'static str),
    #[error("viewport latitude {gamma} is a pole, longitude scale is undefined")]
    PoleSingularity { gamma: f64 },
    #[error("projected point lat={lat}, lon={lon} is outside the valid range")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("degenerate hull: {0}")]
    Degenerate(&'static str),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(&'static str),
}

/// A location in the spatial plane, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeometryError> {
        let p = GeoPoint { lat, lon };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(GeometryError::InvalidGeoPoint { lat, lon })
        }
    }

    /// Latitude in [-90, 90], longitude in (-180, 180].
    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && self.lon > -180.0
            && self.lon <= 180.0
    }
}

/// A point in the pixel plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

impl Pixel {
    pub const fn new(x: f64, y: f64) -> Self {
        Pixel { x, y }
    }

    #[inline]
    pub fn dist2(self, other: Pixel) -> f64 {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }
}

impl std::ops::Sub for Pixel {
    type Output = Pixel;

    #[inline]
    fn sub(self, other: Pixel) -> Pixel {
        Pixel::new(self.x - other.x, self.y - other.y)
    }
}

/// A timestamped mouse sample. `t` is milliseconds on the session's clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovePoint {
    pub x: f64,
    pub y: f64,
    pub t: u64,
}

impl MovePoint {
    pub const fn new(x: f64, y: f64, t: u64) -> Self {
        MovePoint { x, y, t }
    }

    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.x, self.y)
    }
}

/// Geo reference of the viewport center plus the current zoom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewportRef {
    /// Latitude of the viewport center, degrees.
    pub gamma: f64,
    /// Longitude of the viewport center, degrees.
    pub theta: f64,
    /// Degrees per pixel.
    pub scale: f64,
}

impl ViewportRef {
    pub fn new(gamma: f64, theta: f64, scale: f64) -> Result<Self, GeometryError> {
        let v = ViewportRef { gamma, theta, scale };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(GeometryError::InvalidViewport("scale must be positive"));
        }
        if !GeoPoint::new(self.gamma, self.theta).is_ok() {
            return Err(GeometryError::InvalidViewport("center outside lat/lon range"));
        }
        Ok(())
    }

    /// A viewport centered on `bounds` that fits it into `width` × `height` pixels.
    pub fn fit(bounds: &GeoBounds, width: f64, height: f64) -> Result<Self, GeometryError> {
        let gamma = (bounds.min_lat + bounds.max_lat) / 2.0;
        let theta = (bounds.min_lon + bounds.max_lon) / 2.0;
        let cos = gamma.to_radians().cos();
        let lon_scale = (bounds.max_lon - bounds.min_lon) * cos / width.max(1.0);
        let lat_scale = (bounds.max_lat - bounds.min_lat) / height.max(1.0);
        let scale = lon_scale.max(lat_scale);
        let scale = if scale > 0.0 { scale * 1.05 } else { 1e-4 };
        ViewportRef::new(gamma, theta, scale)
    }

    fn cos_gamma(&self) -> Result<f64, GeometryError> {
        self.validate()?;
        if self.gamma.abs() >= 90.0 {
            return Err(GeometryError::PoleSingularity { gamma: self.gamma });
        }
        Ok(self.gamma.to_radians().cos())
    }

    /// Equirectangular pixel → (lat, lon), without any range handling.
    pub fn project_unclamped(&self, px: Pixel) -> Result<(f64, f64), GeometryError> {
        let cos = self.cos_gamma()?;
        let lon = px.x * self.scale / cos + self.theta;
        let lat = px.y * self.scale + self.gamma;
        Ok((lat, lon))
    }
}

/// Pixel → geo, clamping the result into the valid coordinate ranges.
pub fn pixel_to_geo(m: &MovePoint, viewport: &ViewportRef) -> Result<GeoPoint, GeometryError> {
    let (lat, lon) = viewport.project_unclamped(m.pixel())?;
    let lat = lat.clamp(-90.0, 90.0);
    let mut lon = lon.clamp(-180.0, 180.0);
    if lon == -180.0 {
        lon = 180.0;
    }
    Ok(GeoPoint { lat, lon })
}

/// Pixel → geo, failing with `OutOfRange` instead of clamping.
pub fn pixel_to_geo_strict(
    m: &MovePoint,
    viewport: &ViewportRef,
) -> Result<GeoPoint, GeometryError> {
    let (lat, lon) = viewport.project_unclamped(m.pixel())?;
    GeoPoint::new(lat, lon).map_err(|_| GeometryError::OutOfRange { lat, lon })
}

/// Geo → pixel. The returned sample has `t = 0`.
pub fn geo_to_pixel(p: &GeoPoint, viewport: &ViewportRef) -> Result<MovePoint, GeometryError> {
    let px = geo_to_pixel_point(p, viewport)?;
    Ok(MovePoint::new(px.x, px.y, 0))
}

pub fn geo_to_pixel_point(p: &GeoPoint, viewport: &ViewportRef) -> Result<Pixel, GeometryError> {
    let cos = viewport.cos_gamma()?;
    Ok(Pixel::new(
        (p.lon - viewport.theta) * cos / viewport.scale,
        (p.lat - viewport.gamma) / viewport.scale,
    ))
}

/// Great-circle distance in meters.
pub fn haversine_distance(p: &GeoPoint, q: &GeoPoint) -> f64 {
    let lat1 = p.lat.to_radians();
    let lat2 = q.lat.to_radians();
    let dlat = lat2 - lat1;
    let dlon = (q.lon - p.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.min(1.0).sqrt().asin()
}

/// Axis-aligned geo rectangle, inclusive on every side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GeoBounds {
    pub fn of<'a, I: IntoIterator<Item = &'a GeoPoint>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = GeoBounds {
            min_lat: first.lat,
            min_lon: first.lon,
            max_lat: first.lat,
            max_lon: first.lon,
        };
        for p in it {
            b.min_lat = b.min_lat.min(p.lat);
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lat = b.max_lat.max(p.lat);
            b.max_lon = b.max_lon.max(p.lon);
        }
        Some(b)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }
}

#[inline]
pub(crate) fn cross(o: Pixel, a: Pixel, b: Pixel) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Pixel]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// A strictly convex, counter-clockwise pixel polygon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexPolygon {
    vertices: Vec<Pixel>,
}

impl ConvexPolygon {
    /// Accepts either orientation; repeated and collinear vertices are removed.
    pub fn new(vertices: Vec<Pixel>) -> Result<Self, GeometryError> {
        if vertices.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(GeometryError::InvalidPolygon("non-finite vertex"));
        }
        let mut ring = vertices;
        ring.dedup();
        while ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        let ring = drop_collinear(ring, 0.0);
        if ring.len() < 3 {
            return Err(GeometryError::InvalidPolygon("fewer than 3 distinct, non-collinear vertices"));
        }
        let n = ring.len();
        for i in 0..n {
            if cross(ring[i], ring[(i + 1) % n], ring[(i + 2) % n]) <= 0.0 {
                return Err(GeometryError::InvalidPolygon("not convex"));
            }
        }
        // A star polygon can turn left at every vertex; its winding gives it away.
        let mut turn = 0.0;
        for i in 0..n {
            let a = ring[(i + 1) % n] - ring[i];
            let b = ring[(i + 2) % n] - ring[(i + 1) % n];
            turn += (a.x * b.y - a.y * b.x).atan2(a.x * b.x + a.y * b.y);
        }
        if (turn - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(GeometryError::InvalidPolygon("self-intersecting"));
        }
        Ok(ConvexPolygon { vertices: ring })
    }

    /// Axis-aligned rectangle, convenient for tests and fixtures.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        ConvexPolygon::new(vec![
            Pixel::new(x0, y0),
            Pixel::new(x1, y0),
            Pixel::new(x1, y1),
            Pixel::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Pixel] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// `(min, max)` corners of the bounding box.
    pub fn bounds(&self) -> (Pixel, Pixel) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Inside-or-on-boundary test.
    pub fn contains(&self, pt: Pixel) -> bool {
        self.contains_within(pt, CONTAINS_TOLERANCE_PX)
    }

    /// Containment with an explicit boundary tolerance in pixels.
    pub fn contains_within(&self, pt: Pixel, tolerance: f64) -> bool {
        let (lo, hi) = self.bounds();
        if pt.x < lo.x - tolerance
            || pt.x > hi.x + tolerance
            || pt.y < lo.y - tolerance
            || pt.y > hi.y + tolerance
        {
            return false;
        }
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let len = a.dist2(b).sqrt();
            // signed distance of pt from the edge line, positive on the inside
            if cross(a, b, pt) < -tolerance * len {
                return false;
            }
        }
        true
    }
}

/// Removes vertices whose turn is within `tol` of straight (and exact repeats).
fn drop_collinear(mut ring: Vec<Pixel>, tol: f64) -> Vec<Pixel> {
    let mut changed = true;
    while changed && ring.len() >= 3 {
        changed = false;
        let n = ring.len();
        for i in 0..n {
            let prev = ring[(i + n - 1) % n];
            let cur = ring[i];
            let next = ring[(i + 1) % n];
            let scale = prev.dist2(cur).sqrt() * cur.dist2(next).sqrt();
            if cur == prev || cross(prev, cur, next).abs() <= tol * scale {
                ring.remove(i);
                changed = true;
                break;
            }
        }
    }
    ring
}

/// Convex hull by Quickhull.
///
/// Fails with `Degenerate` when fewer than three distinct points are given or
/// when all of them lie on one line.
pub fn quickhull(points: &[Pixel]) -> Result<ConvexPolygon, GeometryError> {
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(GeometryError::Degenerate("non-finite point"));
    }
    if points.len() < 3 {
        return Err(GeometryError::Degenerate("fewer than 3 points"));
    }
    let lexi = |a: &Pixel, b: &Pixel| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y));
    let lo = *points.iter().min_by(|a, b| lexi(a, b)).unwrap();
    let hi = *points.iter().max_by(|a, b| lexi(a, b)).unwrap();
    if lo == hi {
        return Err(GeometryError::Degenerate("all points coincide"));
    }

    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &p in points {
        let c = cross(lo, hi, p);
        if c > 0.0 {
            upper.push(p);
        } else if c < 0.0 {
            lower.push(p);
        }
    }
    if upper.is_empty() && lower.is_empty() {
        return Err(GeometryError::Degenerate("all points are collinear"));
    }

    // counter-clockwise: lower chain lo → hi, then upper chain hi → lo
    let mut hull = Vec::with_capacity(16);
    hull.push(lo);
    hull_side(lo, hi, &lower, &mut hull);
    hull.push(hi);
    hull_side(hi, lo, &upper, &mut hull);

    let ring = drop_collinear(hull, 0.0);
    if ring.len() < 3 {
        return Err(GeometryError::Degenerate("all points are collinear"));
    }
    Ok(ConvexPolygon { vertices: ring })
}

/// Appends the hull vertices strictly right of `a → b`, ordered from `a` to `b`.
/// Every point of `set` lies strictly right of `a → b`.
fn hull_side(a: Pixel, b: Pixel, set: &[Pixel], out: &mut Vec<Pixel>) {
    let mut far = None;
    let mut best = 0.0;
    for &p in set {
        let d = -cross(a, b, p);
        if d > best {
            best = d;
            far = Some(p);
        }
    }
    let Some(c) = far else { return };
    let before: Vec<Pixel> = set.iter().copied().filter(|&p| cross(a, c, p) < 0.0).collect();
    let after: Vec<Pixel> = set.iter().copied().filter(|&p| cross(c, b, p) < 0.0).collect();
    hull_side(a, c, &before, out);
    out.push(c);
    hull_side(c, b, &after, out);
}

/// Intersection of two convex polygons, or `None` when they do not overlap
/// in a region of positive area.
pub fn convex_intersect(a: &ConvexPolygon, b: &ConvexPolygon) -> Option<ConvexPolygon> {
    convex_intersect_min_area(a, b, 0.0)
}

/// Like [`convex_intersect`] but also rejects results with area below `min_area`.
pub fn convex_intersect_min_area(
    a: &ConvexPolygon,
    b: &ConvexPolygon,
    min_area: f64,
) -> Option<ConvexPolygon> {
    let (alo, ahi) = a.bounds();
    let (blo, bhi) = b.bounds();
    if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
        return None;
    }
    let mut ring = a.vertices.clone();
    let clip = &b.vertices;
    let n = clip.len();
    for i in 0..n {
        ring = clip_half_plane(&ring, clip[i], clip[(i + 1) % n]);
        if ring.len() < 3 {
            return None;
        }
    }

    // Clipping leaves near-duplicate and near-collinear vertices behind.
    let extent = (ahi.x - alo.x).abs().max((ahi.y - alo.y).abs()).max(1e-300);
    let snap = extent * 1e-12;
    let mut cleaned: Vec<Pixel> = Vec::with_capacity(ring.len());
    for p in ring {
        if cleaned.last().is_some_and(|q| q.dist2(p).sqrt() <= snap) {
            continue;
        }
        cleaned.push(p);
    }
    while cleaned.len() > 1 && cleaned[0].dist2(*cleaned.last().unwrap()).sqrt() <= snap {
        cleaned.pop();
    }
    let ring = drop_collinear(cleaned, 1e-12);
    if ring.len() < 3 {
        return None;
    }
    let area = signed_area(&ring);
    if area <= extent * extent * 1e-12 || area < min_area {
        return None;
    }
    Some(ConvexPolygon { vertices: ring })
}

/// One Sutherland–Hodgman pass: keeps the part of `ring` left of `a → b`.
fn clip_half_plane(ring: &[Pixel], a: Pixel, b: Pixel) -> Vec<Pixel> {
    let n = ring.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let s = ring[i];
        let e = ring[(i + 1) % n];
        let sc = cross(a, b, s);
        let ec = cross(a, b, e);
        let s_in = sc >= 0.0;
        let e_in = ec >= 0.0;
        if s_in != e_in {
            let t = sc / (sc - ec);
            out.push(Pixel::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
        }
        if e_in {
            out.push(e);
        }
    }
    out
}
