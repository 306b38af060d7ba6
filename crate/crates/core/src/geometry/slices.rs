use serde::{Deserialize, Serialize};

use super::{GeometryError, GeometryParams, Point, Polygon};
use crate::ingest::Quarter;

/// Rigid 2-D transform `p' = R(angle) p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        angle: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    /// Rotation by `angle` about `pivot`, followed by moving `pivot` to the origin.
    pub fn about_pivot(angle: f64, pivot: Point) -> Self {
        let t = -pivot.rotated(angle);
        Self {
            angle,
            tx: t.x,
            ty: t.y,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        p.rotated(self.angle) + Point::new(self.tx, self.ty)
    }

    pub fn inverse(&self) -> Self {
        let t = -Point::new(self.tx, self.ty).rotated(-self.angle);
        Self {
            angle: -self.angle,
            tx: t.x,
            ty: t.y,
        }
    }

    /// Row-major 2x3 affine matrix.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        let (s, c) = self.angle.sin_cos();
        [[c, -s, self.tx], [s, c, self.ty]]
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let m = self.matrix();
        (m[0][0] - 1.0).abs() <= tol
            && m[0][1].abs() <= tol
            && m[1][0].abs() <= tol
            && (m[1][1] - 1.0).abs() <= tol
            && self.tx.abs() <= tol
            && self.ty.abs() <= tol
    }
}

/// Picks the two corners that lie on the lateral line.
///
/// With `n` the unit vector from the Q2 centroid to the Q1 centroid, Q1's
/// lateral corners are its two corners with the smallest projection onto `n`
/// and Q2's are its two corners with the largest. Returned in corner order.
pub fn lateral_segment(
    q1_corners: &[Point; 4],
    q2_corners: &[Point; 4],
    q1_centroid: Point,
    q2_centroid: Point,
    quarter: Quarter,
) -> Result<[Point; 2], GeometryError> {
    let axis = q1_centroid - q2_centroid;
    let len = axis.norm();
    if len == 0.0 || !len.is_finite() {
        return Err(GeometryError::CoincidentCentroids);
    }
    let n = axis * (1.0 / len);
    let (corners, largest) = match quarter {
        Quarter::Q1 => (q1_corners, false),
        Quarter::Q2 => (q2_corners, true),
    };
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| {
        let (pa, pb) = (corners[a].dot(n), corners[b].dot(n));
        if largest {
            pb.total_cmp(&pa)
        } else {
            pa.total_cmp(&pb)
        }
    });
    let (i, j) = (order[0].min(order[1]), order[0].max(order[1]));
    Ok([corners[i], corners[j]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceLayout {
    pub quarter_kind: Quarter,
    /// Image coordinates to the slice frame: the posterior lateral-line
    /// endpoint sits at the origin and the anterior one at `(length, 0)`.
    pub rotation: RigidTransform,
    /// `[posterior, anterior]` lateral-line endpoints in image coordinates.
    pub lateral_segment: [Point; 2],
    pub length: f64,
    pub slice_intervals: [[f64; 2]; 3],
    /// Vertical extent of the quarter mask in the slice frame.
    pub y_range: [f64; 2],
}

/// Nominal cut intervals expanded by `overlap_fraction` of each slice's own
/// nominal width across every internal boundary.
pub fn slice_intervals(length: f64, params: &GeometryParams) -> [[f64; 2]; 3] {
    let [c1, c2] = params.cut_fractions;
    let bounds = [0.0, c1 * length, c2 * length, length];
    let mut out = [[0.0; 2]; 3];
    for i in 0..3 {
        let (lo, hi) = (bounds[i], bounds[i + 1]);
        let grow = params.overlap_fraction * (hi - lo);
        let lo = if i > 0 { (lo - grow).max(0.0) } else { lo };
        let hi = if i < 2 { (hi + grow).min(length) } else { hi };
        out[i] = [lo, hi];
    }
    out
}

/// Rotates a body quarter so its lateral line is horizontal and places the
/// three slice intervals along it.
pub fn slice_layout(
    mask: &Polygon,
    segment: [Point; 2],
    direction: Point,
    quarter: Quarter,
    params: &GeometryParams,
) -> Result<SliceLayout, GeometryError> {
    params.validate()?;
    let [a, b] = segment;
    let length = a.distance(b);
    if length == 0.0 || !length.is_finite() {
        return Err(GeometryError::ZeroLengthLateralLine);
    }
    let (posterior, anterior) = if b.dot(direction) >= a.dot(direction) {
        (a, b)
    } else {
        (b, a)
    };
    let delta = anterior - posterior;
    let rotation = RigidTransform::about_pivot(-delta.y.atan2(delta.x), posterior);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &p in mask.vertices() {
        let q = rotation.apply(p);
        y0 = y0.min(q.y);
        y1 = y1.max(q.y);
    }
    if mask.vertices().is_empty() {
        (y0, y1) = (0.0, 0.0);
    }
    Ok(SliceLayout {
        quarter_kind: quarter,
        rotation,
        lateral_segment: [posterior, anterior],
        length,
        slice_intervals: slice_intervals(length, params),
        y_range: [y0, y1],
    })
}

/// Everything an external cropper needs to cut one slice out of an image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropDescriptor {
    pub image: String,
    pub quarter: Quarter,
    /// 1-based slice index, counted from the posterior end.
    pub slice: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub to_slice_frame: RigidTransform,
    pub to_image: RigidTransform,
    /// Crop rectangle corners mapped back into image coordinates.
    pub image_corners: [Point; 4],
}

pub fn export_slice_crops(layout: &SliceLayout, image_path: &str) -> [CropDescriptor; 3] {
    let inverse = layout.rotation.inverse();
    std::array::from_fn(|i| {
        let [x0, x1] = layout.slice_intervals[i];
        let [y0, y1] = layout.y_range;
        let image_corners = [
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]
        .map(|p| inverse.apply(p));
        CropDescriptor {
            image: image_path.to_string(),
            quarter: layout.quarter_kind,
            slice: i + 1,
            x_range: [x0, x1],
            y_range: layout.y_range,
            to_slice_frame: layout.rotation,
            to_image: inverse,
            image_corners,
        }
    })
}
