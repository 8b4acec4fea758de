//! Attribute schema and the analyst feedback vector over its facets.
//!
//! A facet is one `(attribute, value)` pair. The feedback vector keeps a raw
//! δ-accumulated count per facet and exposes weights normalized to sum to one.
//! Counts only ever grow: rewarding some facets dilutes the weight of the
//! others, it never takes anything away from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{BinEdges, PointRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedbackError {
    #[error("unknown facet <{attribute}, {value}>")]
    UnknownFacet { attribute: String, value: String },
    #[error("increment must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("feedback vector has {found} cells but the schema has {expected} facets")]
    SchemaMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Ordinal,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    /// Facet labels, in facet order. For numeric attributes, one label per bin.
    pub values: Vec<String>,
    /// Present for numeric attributes only.
    pub bins: Option<BinEdges>,
}

impl Attribute {
    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Attribute {
            name: name.to_owned(),
            kind: AttributeKind::Categorical,
            values: values.iter().map(|v| v.to_string()).collect(),
            bins: None,
        }
    }

    pub fn ordinal(name: &str, values: &[&str]) -> Self {
        Attribute { kind: AttributeKind::Ordinal, ..Attribute::categorical(name, values) }
    }

    pub fn numeric(name: &str, bins: BinEdges) -> Self {
        Attribute {
            name: name.to_owned(),
            kind: AttributeKind::Numeric,
            values: bins.labels(),
            bins: Some(bins),
        }
    }

    pub fn value_index(&self, label: &str) -> Option<u32> {
        self.values.iter().position(|v| v == label).map(|i| i as u32)
    }
}

/// The facet universe: every attribute's value domain, laid out back to back.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Self {
        let mut offsets = Vec::with_capacity(attributes.len() + 1);
        let mut acc = 0;
        for a in &attributes {
            offsets.push(acc);
            acc += a.values.len();
        }
        offsets.push(acc);
        AttributeSchema { attributes, offsets }
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn facet_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Facet cells of attribute `attr`.
    pub fn facet_range(&self, attr: usize) -> std::ops::Range<usize> {
        self.offsets[attr]..self.offsets[attr + 1]
    }

    pub fn facet_index(&self, attr: usize, value: u32) -> Option<usize> {
        let range = self.facet_range(attr);
        let idx = range.start + value as usize;
        (idx < range.end).then_some(idx)
    }

    /// `(attribute name, value label)` of a facet cell.
    pub fn facet_label(&self, facet: usize) -> (&str, &str) {
        let attr = self.offsets.partition_point(|&o| o <= facet) - 1;
        let a = &self.attributes[attr];
        (&a.name, &a.values[facet - self.offsets[attr]])
    }

    pub fn lookup(&self, attribute: &str, value: &str) -> Result<usize, FeedbackError> {
        let unknown = || FeedbackError::UnknownFacet {
            attribute: attribute.to_owned(),
            value: value.to_owned(),
        };
        let attr = self.attribute_index(attribute).ok_or_else(unknown)?;
        let v = self.attributes[attr].value_index(value).ok_or_else(unknown)?;
        self.facet_index(attr, v).ok_or_else(unknown)
    }

    /// Facet cells carried by `p`, in attribute order.
    pub fn facets_of(&self, p: &PointRecord) -> Result<Vec<usize>, FeedbackError> {
        if p.values.len() != self.attributes.len() {
            return Err(FeedbackError::UnknownFacet {
                attribute: format!("<{} attributes>", p.values.len()),
                value: format!("point {}", p.id),
            });
        }
        let mut out = Vec::with_capacity(p.values.len());
        for (attr, v) in p.values.iter().enumerate() {
            let Some(v) = *v else { continue };
            let idx = self.facet_index(attr, v).ok_or_else(|| FeedbackError::UnknownFacet {
                attribute: self.attributes[attr].name.clone(),
                value: format!("#{v}"),
            })?;
            out.push(idx);
        }
        Ok(out)
    }
}

/// Normalized facet weights plus the raw counts behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackVector {
    raw_counts: Vec<f64>,
    weights: Vec<f64>,
}

impl FeedbackVector {
    /// All-zero vector: no preference expressed yet.
    pub fn new(schema: &AttributeSchema) -> Self {
        let n = schema.facet_count();
        FeedbackVector { raw_counts: vec![0.0; n], weights: vec![0.0; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn raw_counts(&self) -> &[f64] {
        &self.raw_counts
    }

    pub fn is_zero(&self) -> bool {
        self.raw_counts.iter().all(|&c| c == 0.0)
    }

    /// Returns a copy updated with `matched` (see [`FeedbackVector::apply`]).
    pub fn updated<'a, I>(&self, schema: &AttributeSchema, matched: I, delta: f64) -> Result<Self, FeedbackError>
    where
        I: IntoIterator<Item = &'a PointRecord>,
    {
        let mut next = self.clone();
        next.apply(schema, matched, delta)?;
        Ok(next)
    }

    /// Adds `delta` to the raw count of every facet of every matched point,
    /// then renormalizes so the weights sum to one.
    ///
    /// Either every point is applied or, on error, none is.
    pub fn apply<'a, I>(&mut self, schema: &AttributeSchema, matched: I, delta: f64) -> Result<(), FeedbackError>
    where
        I: IntoIterator<Item = &'a PointRecord>,
    {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(FeedbackError::InvalidDelta(delta));
        }
        if self.raw_counts.len() != schema.facet_count() {
            return Err(FeedbackError::SchemaMismatch {
                expected: schema.facet_count(),
                found: self.raw_counts.len(),
            });
        }
        let mut touched = Vec::new();
        for p in matched {
            touched.extend(schema.facets_of(p)?);
        }
        if touched.is_empty() {
            return Ok(());
        }
        for f in touched {
            self.raw_counts[f] += delta;
        }
        self.normalize();
        Ok(())
    }

    fn normalize(&mut self) {
        let total: f64 = self.raw_counts.iter().sum();
        if total > 0.0 {
            for (w, c) in self.weights.iter_mut().zip(&self.raw_counts) {
                *w = c / total;
            }
        }
    }

    /// Normalized weight of a facet; 0 if it was never touched.
    pub fn facet_weight(&self, schema: &AttributeSchema, attribute: &str, value: &str) -> Result<f64, FeedbackError> {
        let idx = schema.lookup(attribute, value)?;
        Ok(self.weights.get(idx).copied().unwrap_or(0.0))
    }

    pub fn snapshot(&self, schema: &AttributeSchema) -> FeedbackSnapshot {
        let facets = (0..schema.facet_count())
            .map(|i| {
                let (attribute, value) = schema.facet_label(i);
                FacetEntry {
                    attribute: attribute.to_owned(),
                    value: value.to_owned(),
                    raw_count: self.raw_counts[i],
                    weight: self.weights[i],
                }
            })
            .collect();
        FeedbackSnapshot { facets }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetEntry {
    pub attribute: String,
    pub value: String,
    pub raw_count: f64,
    pub weight: f64,
}

/// Facet → weight document, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSnapshot {
    pub facets: Vec<FacetEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeoPoint;
    use crate::ingestion::PointId;

    fn schema() -> AttributeSchema {
        AttributeSchema::new(vec![
            Attribute::ordinal("#Beds", &["1", "2", "+2"]),
            Attribute::categorical("Balcony", &["Yes", "No"]),
            Attribute::categorical("Air-cond.", &["Yes", "No"]),
            Attribute::ordinal("Rating", &["1", "2", "3", "4", "5"]),
        ])
    }

    fn point(id: u64, values: [u32; 4]) -> PointRecord {
        PointRecord {
            id: PointId(id),
            location: GeoPoint::new(48.85, 2.35).unwrap(),
            values: values.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// Table 1 rows as value indexes.
    fn table1() -> Vec<PointRecord> {
        vec![
            point(1, [0, 0, 0, 4]),
            point(2, [0, 0, 1, 4]),
            point(3, [1, 0, 1, 4]),
            point(4, [0, 0, 1, 3]),
        ]
    }

    #[test]
    fn table2_weights() {
        let s = schema();
        let f = FeedbackVector::new(&s).updated(&s, &table1(), 1.0).unwrap();
        let expected = [0.19, 0.06, 0.0, 0.25, 0.0, 0.06, 0.19, 0.0, 0.0, 0.0, 0.06, 0.19];
        assert_eq!(f.weights().len(), expected.len());
        for (w, e) in f.weights().iter().zip(expected) {
            assert!((w - e).abs() <= 0.005, "{w} vs {e}");
        }
        assert!((f.facet_weight(&s, "Balcony", "Yes").unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(f.raw_counts()[0], 3.0);
    }

    #[test]
    fn empty_match_keeps_vector() {
        let s = schema();
        let f = FeedbackVector::new(&s).updated(&s, &table1(), 1.0).unwrap();
        let g = f.updated(&s, &[], 1.0).unwrap();
        assert_eq!(f, g);
        let z = FeedbackVector::new(&s);
        assert!(z.updated(&s, &[], 1.0).unwrap().is_zero());
    }

    #[test]
    fn symmetric_facets_share_weight() {
        let s = AttributeSchema::new(vec![
            Attribute::categorical("a", &["x", "y"]),
            Attribute::categorical("b", &["x", "y"]),
        ]);
        let p = PointRecord {
            id: PointId(1),
            location: GeoPoint::new(0.0, 0.0).unwrap(),
            values: vec![Some(0), Some(1)],
        };
        let f = FeedbackVector::new(&s).updated(&s, [&p], 2.0).unwrap();
        assert_eq!(f.facet_weight(&s, "a", "x").unwrap(), 0.5);
        assert_eq!(f.facet_weight(&s, "b", "y").unwrap(), 0.5);
        assert_eq!(f.facet_weight(&s, "a", "y").unwrap(), 0.0);
    }

    #[test]
    fn untouched_and_unknown_facets() {
        let s = schema();
        let f = FeedbackVector::new(&s);
        assert_eq!(f.facet_weight(&s, "Rating", "2").unwrap(), 0.0);
        assert!(matches!(
            f.facet_weight(&s, "Rating", "7"),
            Err(FeedbackError::UnknownFacet { .. })
        ));
        assert!(f.facet_weight(&s, "Price", "1").is_err());
    }

    #[test]
    fn out_of_schema_value_is_rejected_atomically() {
        let s = schema();
        let mut f = FeedbackVector::new(&s);
        let bad = point(9, [0, 0, 0, 7]);
        let pts = vec![point(1, [0, 0, 0, 4]), bad];
        assert!(matches!(f.apply(&s, &pts, 1.0), Err(FeedbackError::UnknownFacet { .. })));
        assert!(f.is_zero());
    }

    #[test]
    fn bad_delta() {
        let s = schema();
        let mut f = FeedbackVector::new(&s);
        assert!(f.apply(&s, &table1(), 0.0).is_err());
        assert!(f.apply(&s, &table1(), f64::NAN).is_err());
    }

    #[test]
    fn missing_values_contribute_nothing() {
        let s = schema();
        let mut p = point(1, [0, 0, 0, 4]);
        p.values[1] = None;
        let f = FeedbackVector::new(&s).updated(&s, [&p], 1.0).unwrap();
        assert_eq!(f.facet_weight(&s, "Balcony", "Yes").unwrap(), 0.0);
        assert!((f.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labels_round_trip() {
        let s = schema();
        for i in 0..s.facet_count() {
            let (a, v) = s.facet_label(i);
            assert_eq!(s.lookup(a, v).unwrap(), i);
        }
        let snap = FeedbackVector::new(&s).snapshot(&s);
        assert_eq!(snap.facets.len(), 12);
        assert_eq!(snap.facets[2].value, "+2");
    }
}
