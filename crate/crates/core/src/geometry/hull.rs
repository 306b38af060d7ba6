use super::{GeometryError, GeometryParams, Point, Polygon, Rect};

/// Convex hull by monotone chain.
///
/// Vertices come back counterclockwise (positive cross product orientation),
/// starting from the lexicographically smallest `(x, y)` point, with
/// collinear points removed.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point, a: Point, b: Point| (a - o).cross(b - o);
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Hull vertex with the largest dot product with `dir`; first index wins ties.
pub fn support_point(hull: &[Point], dir: Point) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, p) in hull.iter().enumerate() {
        let v = p.dot(dir);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Unit vector pointing from the tail-fin box center to the head box center.
pub fn swimming_direction(head: &Rect, tail: &Rect) -> Result<Point, GeometryError> {
    if !head.is_positive() || !tail.is_positive() {
        return Err(GeometryError::EmptyBox);
    }
    let d = head.center() - tail.center();
    let n = d.norm();
    if n == 0.0 {
        return Err(GeometryError::CoincidentCenters);
    }
    Ok(d * (1.0 / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeometryWarning {
    /// Two support directions picked the same hull vertex.
    DuplicateCorner,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuarterCorners {
    /// Support points for `+offset` and `-offset` rotations of the swimming
    /// direction, followed by `+offset` and `-offset` rotations of its reverse.
    pub points: [Point; 4],
    pub hull_indices: [usize; 4],
    pub warnings: Vec<GeometryWarning>,
}

/// Finds the four corners of a body-quarter mask as convex-hull support points.
pub fn quarter_corners(
    mask: &Polygon,
    direction: Point,
    params: &GeometryParams,
) -> Result<QuarterCorners, GeometryError> {
    let hull = convex_hull(mask.vertices());
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateHull);
    }
    let off = params.corner_offset_deg.to_radians();
    let dirs = [
        direction.rotated(off),
        direction.rotated(-off),
        (-direction).rotated(off),
        (-direction).rotated(-off),
    ];
    let hull_indices = dirs.map(|d| support_point(&hull, d));
    let points = hull_indices.map(|i| hull[i]);
    let mut warnings = Vec::new();
    let mut sorted = hull_indices;
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        warnings.push(GeometryWarning::DuplicateCorner);
    }
    Ok(QuarterCorners {
        points,
        hull_indices,
        warnings,
    })
}
