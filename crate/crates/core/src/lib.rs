//! Spatial highlighting driven by implicit feedback from mouse movement.
//!
//! Mouse samples over a map are clustered per time segment; regions the
//! analyst keeps returning to become IDRs. Dataset points inside IDRs update a
//! feedback vector over attribute facets, which in turn ranks a small set of
//! similar yet geographically diverse points to highlight next.

pub mod clustering;
pub mod feedback;
pub mod geometry;
pub mod highlight;
pub mod idr;
pub mod ingestion;
pub mod spatial_index;
pub mod replay;
pub mod session;
pub mod synth;
