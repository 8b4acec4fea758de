//! Seeded synthetic datasets and mouse traces.
//!
//! Datasets are rental-style listings scattered over central Paris. Traces
//! follow a dwell-and-move pattern: the cursor visits a few interest spots
//! in turn, hovers around each in a Gaussian cloud, and travels between them
//! in straight lines.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{GeoPoint, MovePoint};
use crate::ingestion::{load_from_str, IngestError, Loaded, MappingConfig, SourceFormat};

/// Bounding box of the generated listings: (min_lat, min_lon, max_lat, max_lon).
pub const PARIS_BOUNDS: (f64, f64, f64, f64) = (48.815, 2.25, 48.902, 2.42);

/// Mapping for [`listings_csv`] output.
pub const LISTINGS_MAPPING: &str = r##"
id_column = "id"
lat_column = "lat"
lon_column = "lon"

[[attributes]]
column = "beds"
name = "#Beds"
kind = "ordinal"
values = ["1", "2", "+2"]

[[attributes]]
column = "balcony"
name = "Balcony"
kind = "categorical"
values = ["Yes", "No"]

[[attributes]]
column = "aircon"
name = "Air-cond."
kind = "categorical"
values = ["Yes", "No"]

[[attributes]]
column = "rating"
name = "Rating"
kind = "ordinal"
values = ["1", "2", "3", "4", "5"]

[[attributes]]
column = "price"
name = "Price"
kind = "numeric"
bins = 8
"##;

/// CSV with `n` listings, ids 1..=n.
pub fn listings_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lat0, lon0, lat1, lon1) = PARIS_BOUNDS;
    let mut out = String::from("id,lat,lon,price,beds,balcony,aircon,rating\n");
    for id in 1..=n {
        let lat = rng.random_range(lat0..lat1);
        let lon = rng.random_range(lon0..lon1);
        let beds = ["1", "2", "+2"][rng.random_range(0..3)];
        let price = 40 + rng.random_range(0..260);
        let balcony = if rng.random_bool(0.4) { "Yes" } else { "No" };
        let aircon = if rng.random_bool(0.3) { "Yes" } else { "No" };
        let rating = rng.random_range(1..=5);
        let _ = writeln!(out, "{id},{lat:.6},{lon:.6},{price},{beds},{balcony},{aircon},{rating}");
    }
    out
}

/// Loads `n` synthetic listings through the regular ingestion path.
pub fn listings(n: usize, seed: u64) -> Result<Loaded, IngestError> {
    let config = MappingConfig::from_toml(LISTINGS_MAPPING)?;
    load_from_str(&listings_csv(n, seed), SourceFormat::Csv, &config)
}

/// `n` uniform locations inside `PARIS_BOUNDS`.
pub fn uniform_locations(n: usize, seed: u64) -> Vec<GeoPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lat0, lon0, lat1, lon1) = PARIS_BOUNDS;
    (0..n)
        .map(|_| GeoPoint { lat: rng.random_range(lat0..lat1), lon: rng.random_range(lon0..lon1) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub duration_ms: u64,
    /// Number of interest spots.
    pub spots: usize,
    /// Viewport size in pixels; spots are drawn inside its central 80%.
    pub width: f64,
    pub height: f64,
    /// Standard deviation of the hover cloud around a spot, pixels.
    pub dwell_sigma_px: f64,
    pub dwell_ms: u64,
    pub transit_ms: u64,
    /// Sampling period; jitter up to 20% is added on top.
    pub sample_ms: u64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            duration_ms: 60_000,
            spots: 3,
            width: 1024.0,
            height: 768.0,
            dwell_sigma_px: 12.0,
            dwell_ms: 4_000,
            transit_ms: 800,
            sample_ms: 200,
        }
    }
}

/// Dwell-and-move trace with session-relative timestamps starting at 0.
/// Spots are visited round-robin so each recurs across the session.
pub fn dwell_trace(params: &TraceParams, seed: u64) -> Vec<MovePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hw, hh) = (params.width * 0.4, params.height * 0.4);
    let spots: Vec<(f64, f64)> =
        (0..params.spots.max(1)).map(|_| (rng.random_range(-hw..hw), rng.random_range(-hh..hh))).collect();
    let cloud = Normal::new(0.0, params.dwell_sigma_px.max(0.0)).expect("finite sigma");
    let step = params.sample_ms.max(1);
    let jitter = step / 5;

    let mut out = Vec::new();
    let mut t = 0;
    let mut spot = 0;
    let mut phase_end = params.dwell_ms;
    let mut dwelling = true;
    let mut from = spots[0];
    while t <= params.duration_ms {
        if t >= phase_end {
            if dwelling {
                from = spots[spot];
                spot = (spot + 1) % spots.len();
                phase_end += params.transit_ms;
            } else {
                phase_end += params.dwell_ms;
            }
            dwelling = !dwelling;
            continue;
        }
        let (x, y) = if dwelling {
            let (cx, cy) = spots[spot];
            (cx + cloud.sample(&mut rng), cy + cloud.sample(&mut rng))
        } else {
            let to = spots[spot];
            let start = phase_end - params.transit_ms;
            let a = (t - start) as f64 / params.transit_ms.max(1) as f64;
            (from.0 + a * (to.0 - from.0), from.1 + a * (to.1 - from.1))
        };
        out.push(MovePoint::new(x, y, t));
        t += step + if jitter > 0 { rng.random_range(0..=jitter) } else { 0 };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listings_are_seeded() {
        assert_eq!(listings_csv(20, 7), listings_csv(20, 7));
        assert_ne!(listings_csv(20, 7), listings_csv(20, 8));
        let loaded = listings(200, 1).unwrap();
        assert_eq!(loaded.dataset.len(), 200);
        assert_eq!(loaded.stats.dropped_total(), 0);
        assert_eq!(loaded.dataset.schema().len(), 5);
    }

    #[test]
    fn trace_shape() {
        let p = TraceParams::default();
        let trace = dwell_trace(&p, 3);
        assert_eq!(trace, dwell_trace(&p, 3));
        assert!(trace.windows(2).all(|w| w[1].t >= w[0].t + 200));
        assert!(trace.last().unwrap().t <= p.duration_ms);
        assert!(trace.len() > 200);
    }
}
