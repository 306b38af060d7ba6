//! Quarter corners, lateral-line endpoints and texture-anchored slices.
//!
//! The pipeline per sample is:
//! 1. swimming direction from the tail-fin and head box centers,
//! 2. four corners per quarter mask as convex-hull support points in
//!    directions offset by `±corner_offset_deg` from the swimming direction
//!    and its reverse,
//! 3. the lateral line as the two corners on the Q1/Q2 boundary,
//! 4. a rotation making the lateral line horizontal and three overlapping
//!    slice intervals along it.

mod hull;
mod primitives;
mod slices;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hull::{
    convex_hull, quarter_corners, support_point, swimming_direction, GeometryWarning,
    QuarterCorners,
};
pub use primitives::{Point, Polygon, Rect};
pub use slices::{
    export_slice_crops, lateral_segment, slice_intervals, slice_layout, CropDescriptor,
    RigidTransform, SliceLayout,
};

use crate::ingest::{Quarter, SampleRecord};
use crate::model::SampleId;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("head and tail box centers coincide")]
    CoincidentCenters,
    #[error("body-part box has no area")]
    EmptyBox,
    #[error("convex hull has fewer than 3 distinct vertices")]
    DegenerateHull,
    #[error("quarter centroids coincide")]
    CoincidentCentroids,
    #[error("lateral line has zero length")]
    ZeroLengthLateralLine,
    #[error("sample {sample} lacks {what}")]
    MissingInput { sample: SampleId, what: String },
    #[error("invalid geometry parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub corner_offset_deg: f64,
    pub cut_fractions: [f64; 2],
    /// Overlap added across each internal slice boundary, as a fraction of
    /// the expanded slice's nominal width. Two 16 px tokens of a 224 px
    /// input give 2/14.
    pub overlap_fraction: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            corner_offset_deg: 70.0,
            cut_fractions: [0.3, 0.7],
            overlap_fraction: 2.0 / 14.0,
        }
    }
}

impl GeometryParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let [c1, c2] = self.cut_fractions;
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(GeometryError::InvalidParams(format!(
                "cut fractions must satisfy 0 < {c1} < {c2} < 1"
            )));
        }
        if !(self.corner_offset_deg > 0.0 && self.corner_offset_deg < 90.0) {
            return Err(GeometryError::InvalidParams(format!(
                "corner offset {} must lie in (0, 90) degrees",
                self.corner_offset_deg
            )));
        }
        if !(self.overlap_fraction >= 0.0 && self.overlap_fraction.is_finite()) {
            return Err(GeometryError::InvalidParams(
                "overlap fraction must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Slice layouts of both quarters of one sample, `[Q1, Q2]`.
pub fn sample_layouts(
    record: &SampleRecord,
    params: &GeometryParams,
) -> Result<[SliceLayout; 2], GeometryError> {
    let det = &record.detection;
    let missing = |what: &str| GeometryError::MissingInput {
        sample: det.sample_id,
        what: what.to_string(),
    };
    let head = det.part("head").ok_or_else(|| missing("a head box"))?;
    let tail = det
        .part("tail_fin")
        .ok_or_else(|| missing("a tail_fin box"))?;
    let direction = swimming_direction(head, tail)?;
    let q1 = det
        .quarter_masks
        .get(&Quarter::Q1)
        .ok_or_else(|| missing("a Q1 mask"))?;
    let q2 = det
        .quarter_masks
        .get(&Quarter::Q2)
        .ok_or_else(|| missing("a Q2 mask"))?;
    let c1 = quarter_corners(q1, direction, params)?;
    let c2 = quarter_corners(q2, direction, params)?;
    let (m1, m2) = (q1.centroid(), q2.centroid());
    let seg1 = lateral_segment(&c1.points, &c2.points, m1, m2, Quarter::Q1)?;
    let seg2 = lateral_segment(&c1.points, &c2.points, m1, m2, Quarter::Q2)?;
    Ok([
        slice_layout(q1, seg1, direction, Quarter::Q1, params)?,
        slice_layout(q2, seg2, direction, Quarter::Q2, params)?,
    ])
}
