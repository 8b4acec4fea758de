//! Dataset loading: CSV or JSON-lines exports mapped through a per-dataset
//! config onto points with a finite facet schema.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{Attribute, AttributeKind, AttributeSchema};
use crate::geometry::{GeoBounds, GeoPoint};

/// Default number of equal-frequency bins for numeric attributes.
pub const DEFAULT_BINS: usize = 8;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    UnreadableSource { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid mapping config: {0}")]
    Config(String),
    #[error("coordinate column(s) missing from the source: {0}")]
    MissingCoordinateColumns(String),
    #[error("attribute column `{0}` missing from the source")]
    MissingColumn(String),
    #[error("no valid rows in the source")]
    NoValidRows,
    #[error("number of bins must be at least 1")]
    InvalidBinCount,
    #[error("no finite values to bin")]
    NoFiniteValues,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub u64);

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A dataset point. `values[i]` is the value index of schema attribute `i`,
/// or `None` when the source had no value for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub id: PointId,
    pub location: GeoPoint,
    pub values: Vec<Option<u32>>,
}

impl PointRecord {
    /// `(attribute, value label)` pairs of this point.
    pub fn labelled<'s>(&self, schema: &'s AttributeSchema) -> BTreeMap<&'s str, &'s str> {
        schema
            .attributes()
            .iter()
            .zip(&self.values)
            .filter_map(|(a, v)| v.map(|v| (a.name.as_str(), a.values[v as usize].as_str())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    points: Vec<PointRecord>,
    schema: AttributeSchema,
    bounds: GeoBounds,
}

impl Dataset {
    pub fn new(points: Vec<PointRecord>, schema: AttributeSchema) -> Result<Self, IngestError> {
        let bounds = GeoBounds::of(points.iter().map(|p| &p.location)).ok_or(IngestError::NoValidRows)?;
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !seen.insert(p.id) {
                return Err(IngestError::InvalidDataset(format!("duplicate point id {}", p.id)));
            }
            if !p.location.is_valid() {
                return Err(IngestError::InvalidDataset(format!("point {} has invalid coordinates", p.id)));
            }
            if schema.facets_of(p).is_err() {
                return Err(IngestError::InvalidDataset(format!("point {} does not conform to the schema", p.id)));
            }
        }
        Ok(Dataset { points, schema, bounds })
    }

    pub fn points(&self) -> &[PointRecord] {
        &self.points
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn bounds(&self) -> &GeoBounds {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Equal-frequency bin boundaries. A value `v` falls in bin
/// `#{cut ≤ v}`, so bin `i` covers `[cuts[i-1], cuts[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub min: f64,
    pub max: f64,
    pub cuts: Vec<f64>,
}

impl BinEdges {
    pub fn bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin_of(&self, v: f64) -> u32 {
        self.cuts.partition_point(|&c| c <= v) as u32
    }

    pub fn labels(&self) -> Vec<String> {
        let mut bounds = Vec::with_capacity(self.cuts.len() + 2);
        bounds.push(self.min);
        bounds.extend(&self.cuts);
        bounds.push(self.max);
        (0..self.bins())
            .map(|i| {
                if i + 1 == self.bins() {
                    format!("[{}, {}]", bounds[i], bounds[i + 1])
                } else {
                    format!("[{}, {})", bounds[i], bounds[i + 1])
                }
            })
            .collect()
    }
}

/// Equal-frequency binning. Collapses to fewer bins when there are fewer
/// distinct values than `bins` (a constant column gets a single bin).
pub fn bin_numeric(values: &[f64], bins: usize) -> Result<BinEdges, IngestError> {
    if bins == 0 {
        return Err(IngestError::InvalidBinCount);
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(IngestError::NoFiniteValues);
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(bins - 1);
    for i in 1..bins {
        let c = sorted[i * n / bins];
        if c > sorted[0] && cuts.last().is_none_or(|&last| c > last) {
            cuts.push(c);
        }
    }
    Ok(BinEdges { min: sorted[0], max: sorted[n - 1], cuts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMapping {
    pub column: String,
    /// Display name; defaults to the column name.
    #[serde(default)]
    pub name: Option<String>,
    pub kind: AttributeKind,
    /// Numeric attributes only.
    #[serde(default)]
    pub bins: Option<usize>,
    /// Declared domain for categorical/ordinal attributes, in facet order.
    #[serde(default)]
    pub values: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    #[serde(default)]
    pub format: Option<SourceFormat>,
    #[serde(default)]
    pub id_column: Option<String>,
    pub lat_column: String,
    pub lon_column: String,
    #[serde(default)]
    pub attributes: Vec<AttributeMapping>,
}

impl MappingConfig {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::UnreadableSource {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    InvalidCoordinates,
    InvalidId,
    DuplicateId,
    InvalidNumber,
    UnknownValue,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LoadStats {
    pub rows_read: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl LoadStats {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub stats: LoadStats,
}

struct RawRow {
    fields: BTreeMap<String, String>,
}

fn read_csv(text: &str) -> Result<(Vec<String>, Vec<RawRow>), IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let fields = headers
            .iter()
            .zip(record.iter())
            .filter(|(_, v)| !v.is_empty())
            .map(|(h, v)| (h.clone(), v.to_owned()))
            .collect();
        rows.push(RawRow { fields });
    }
    Ok((headers, rows))
}

fn read_jsonl(text: &str) -> Result<(Vec<String>, Vec<RawRow>), IngestError> {
    let mut columns = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| IngestError::Parse { line: i + 1, message: e.to_string() })?;
        let serde_json::Value::Object(obj) = value else {
            return Err(IngestError::Parse { line: i + 1, message: "expected a JSON object".into() });
        };
        let mut fields = BTreeMap::new();
        for (k, v) in obj {
            columns.insert(k.clone());
            let s = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) if s.is_empty() => continue,
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            fields.insert(k, s);
        }
        rows.push(RawRow { fields });
    }
    Ok((columns.into_iter().collect(), rows))
}

fn infer_format(path: &Path) -> SourceFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") | Some("json") => SourceFormat::Jsonl,
        _ => SourceFormat::Csv,
    }
}

/// Loads `path` with `config`. Rows with invalid coordinates (and the other
/// [`DropReason`]s) are dropped and counted rather than failing the load.
pub fn load_dataset(path: &Path, config: &MappingConfig) -> Result<Loaded, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::UnreadableSource {
        path: path.display().to_string(),
        source,
    })?;
    let format = config.format.unwrap_or_else(|| infer_format(path));
    load_from_str(&text, format, config)
}

pub fn load_from_str(text: &str, format: SourceFormat, config: &MappingConfig) -> Result<Loaded, IngestError> {
    let (columns, rows) = match format {
        SourceFormat::Csv => read_csv(text)?,
        SourceFormat::Jsonl => read_jsonl(text)?,
    };
    let has = |c: &str| columns.iter().any(|h| h == c);
    let missing: Vec<&str> = [&config.lat_column, &config.lon_column]
        .into_iter()
        .filter(|c| !has(c))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingCoordinateColumns(missing.join(", ")));
    }
    if let Some(id) = &config.id_column {
        if !has(id) {
            return Err(IngestError::MissingColumn(id.clone()));
        }
    }
    for a in &config.attributes {
        if !has(&a.column) {
            return Err(IngestError::MissingColumn(a.column.clone()));
        }
        if a.kind == AttributeKind::Numeric && a.bins == Some(0) {
            return Err(IngestError::InvalidBinCount);
        }
    }

    let mut stats = LoadStats { rows_read: rows.len(), ..Default::default() };
    let mut drop = |r: DropReason| *stats.dropped.entry(r).or_default() += 1;

    // first pass: coordinates, ids and raw values
    struct Staged<'a> {
        id: PointId,
        location: GeoPoint,
        raw: Vec<Option<&'a str>>,
    }
    let mut staged: Vec<Staged> = Vec::new();
    let mut ids = HashSet::new();
    'rows: for (ordinal, row) in rows.iter().enumerate() {
        let coord = |c: &str| row.fields.get(c).and_then(|v| v.parse::<f64>().ok());
        let location = match (coord(&config.lat_column), coord(&config.lon_column)) {
            (Some(lat), Some(lon)) => match GeoPoint::new(lat, lon) {
                Ok(p) => p,
                Err(_) => {
                    drop(DropReason::InvalidCoordinates);
                    continue;
                }
            },
            _ => {
                drop(DropReason::InvalidCoordinates);
                continue;
            }
        };
        let id = match &config.id_column {
            Some(c) => match row.fields.get(c).and_then(|v| v.parse::<u64>().ok()) {
                Some(id) => PointId(id),
                None => {
                    drop(DropReason::InvalidId);
                    continue;
                }
            },
            None => PointId(ordinal as u64 + 1),
        };
        let mut raw = Vec::with_capacity(config.attributes.len());
        for a in &config.attributes {
            let v = row.fields.get(&a.column).map(String::as_str);
            if let (Some(v), AttributeKind::Numeric) = (v, a.kind) {
                if !v.parse::<f64>().is_ok_and(f64::is_finite) {
                    drop(DropReason::InvalidNumber);
                    continue 'rows;
                }
            }
            if let (Some(v), Some(domain)) = (v, &a.values) {
                if a.kind != AttributeKind::Numeric && !domain.iter().any(|d| d == v) {
                    drop(DropReason::UnknownValue);
                    continue 'rows;
                }
            }
            raw.push(v);
        }
        if !ids.insert(id) {
            drop(DropReason::DuplicateId);
            continue;
        }
        staged.push(Staged { id, location, raw });
    }
    if staged.is_empty() {
        return Err(IngestError::NoValidRows);
    }

    // second pass: domains
    let mut attributes = Vec::with_capacity(config.attributes.len());
    for (k, a) in config.attributes.iter().enumerate() {
        let name = a.name.clone().unwrap_or_else(|| a.column.clone());
        let column = staged.iter().filter_map(|s| s.raw[k]);
        let attr = match a.kind {
            AttributeKind::Numeric => {
                let values: Vec<f64> = column.map(|v| v.parse::<f64>().unwrap()).collect();
                let edges = if values.is_empty() {
                    BinEdges { min: 0.0, max: 0.0, cuts: Vec::new() }
                } else {
                    bin_numeric(&values, a.bins.unwrap_or(DEFAULT_BINS))?
                };
                Attribute { name, ..Attribute::numeric("", edges) }
            }
            kind => {
                let values = match &a.values {
                    Some(v) => v.clone(),
                    None => derive_domain(column, kind),
                };
                Attribute { name, kind, values, bins: None }
            }
        };
        attributes.push(attr);
    }

    let points = staged
        .into_iter()
        .map(|s| {
            let values = s
                .raw
                .iter()
                .zip(&attributes)
                .map(|(v, attr)| {
                    let v = (*v)?;
                    match &attr.bins {
                        Some(edges) => Some(edges.bin_of(v.parse::<f64>().unwrap())),
                        None => attr.value_index(v),
                    }
                })
                .collect();
            PointRecord { id: s.id, location: s.location, values }
        })
        .collect();
    let dataset = Dataset::new(points, AttributeSchema::new(attributes))?;
    Ok(Loaded { dataset, stats })
}

/// Sorted distinct values; ordinal columns sort numerically when they can.
fn derive_domain<'a, I: Iterator<Item = &'a str>>(column: I, kind: AttributeKind) -> Vec<String> {
    let distinct: BTreeSet<&str> = column.collect();
    let mut values: Vec<&str> = distinct.into_iter().collect();
    if kind == AttributeKind::Ordinal && values.iter().all(|v| v.parse::<f64>().is_ok()) {
        values.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    values.into_iter().map(str::to_owned).collect()
}
