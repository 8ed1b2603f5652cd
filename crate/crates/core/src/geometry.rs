//! Bird's-eye-view geometry: boxes, angle arithmetic and rotated-rectangle overlap.
//!
//! Boxes are 5-DoF planar rectangles `(x, y, w, d, theta)`. `w` extends along the
//! box's local x axis and `d` along its local y axis; `theta` rotates the local frame
//! counter-clockwise about the vertical axis.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intersections with area at or below this many square meters count as empty.
pub const EPSILON_AREA: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite angle {theta}")));
    }
    Ok(wrap_angle_unchecked(theta))
}

#[inline]
pub(crate) fn wrap_angle_unchecked(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Smallest absolute difference between two headings, in `[0, pi]`.
pub fn angular_distance(a: f64, b: f64) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite angle in angular_distance({a}, {b})"
        )));
    }
    Ok(angular_distance_unchecked(a, b))
}

#[inline]
pub(crate) fn angular_distance_unchecked(a: f64, b: f64) -> f64 {
    // |a - b| is exactly symmetric in IEEE arithmetic, so the result is too.
    let d = (a - b).abs() % TAU;
    d.min(TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(&self, other: &Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }
}

#[inline]
fn cross(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    let u = a.sub(o);
    let v = b.sub(o);
    u.x * v.y - u.y * v.x
}

/// A planar box: center, width, depth and yaw.
///
/// Construct through [`BevBox::new`] to enforce positive extents and a wrapped yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub d: f64,
    pub theta: f64,
}

impl BevBox {
    pub fn new(x: f64, y: f64, w: f64, d: f64, theta: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite center ({x}, {y})")));
        }
        if !(w.is_finite() && d.is_finite() && w > 0.0 && d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "box extents must be positive, got w={w} d={d}"
            )));
        }
        Ok(Self {
            x,
            y,
            w,
            d,
            theta: wrap_angle(theta)?,
        })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn area(&self) -> f64 {
        self.w * self.d
    }

    /// The box as a counter-clockwise rectangle.
    pub fn corners(&self) -> ConvexPolygon {
        let (s, c) = self.theta.sin_cos();
        let hw = 0.5 * self.w;
        let hd = 0.5 * self.d;
        let local = [(-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)];
        let vertices = local
            .iter()
            .map(|&(u, v)| Point2::new(self.x + c * u - s * v, self.y + s * u + c * v))
            .collect();
        ConvexPolygon { vertices }
    }

    /// Axis-aligned rectangle enclosing the rotated box.
    pub fn axis_aligned_hull(&self) -> BevBox {
        let (s, c) = self.theta.sin_cos();
        let ext_x = 0.5 * (self.w * c.abs() + self.d * s.abs());
        let ext_y = 0.5 * (self.w * s.abs() + self.d * c.abs());
        BevBox {
            x: self.x,
            y: self.y,
            w: 2.0 * ext_x,
            d: 2.0 * ext_y,
            theta: 0.0,
        }
    }
}

/// Convenience wrapper around [`BevBox::corners`].
pub fn box_corners(b: &BevBox) -> ConvexPolygon {
    b.corners()
}

/// A strictly convex polygon with counter-clockwise vertices and positive area.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Builds a polygon from vertices in either orientation. Clockwise input is
    /// reversed; non-convex or degenerate input is rejected.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidArgument("non-finite polygon vertex".into()));
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let turn = cross(&vertices[i], &vertices[(i + 1) % n], &vertices[(i + 2) % n]);
            if turn <= 0.0 {
                return Err(Error::InvalidArgument(
                    "polygon is not strictly convex".into(),
                ));
            }
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(Error::InvalidArgument("polygon has no area".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// True when `p` lies inside or on the boundary.
    pub fn contains(&self, p: &Point2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n], p) >= 0.0)
    }
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = &vertices[i];
            let b = &vertices[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum();
    0.5 * twice
}

/// Drops consecutive near-duplicate and collinear vertices left by clipping.
fn simplify(points: Vec<Point2>) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(points.len());
    for p in points {
        if out
            .last()
            .is_some_and(|q: &Point2| (q.x - p.x).abs() < 1e-12 && (q.y - p.y).abs() < 1e-12)
        {
            continue;
        }
        out.push(p);
    }
    while out.len() > 1 {
        let first = out[0];
        let last = out[out.len() - 1];
        if (first.x - last.x).abs() < 1e-12 && (first.y - last.y).abs() < 1e-12 {
            out.pop();
        } else {
            break;
        }
    }
    let mut changed = true;
    while changed && out.len() >= 3 {
        changed = false;
        let n = out.len();
        for i in 0..n {
            let prev = out[(i + n - 1) % n];
            let next = out[(i + 1) % n];
            if cross(&prev, &out[i], &next) <= 1e-15 {
                out.remove(i);
                changed = true;
                break;
            }
        }
    }
    out
}

/// Convex intersection of two convex polygons (Sutherland-Hodgman clipping).
///
/// Returns `None` when the polygons are disjoint or the overlap area is at most
/// [`EPSILON_AREA`].
pub fn polygon_intersection(a: &ConvexPolygon, b: &ConvexPolygon) -> Option<ConvexPolygon> {
    let mut output: Vec<Point2> = a.vertices.clone();
    let clip = &b.vertices;
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            return None;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let cur_in = cross(&e0, &e1, &cur) >= 0.0;
            let prev_in = cross(&e0, &e1, &prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(&prev, &cur, &e0, &e1));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(&prev, &cur, &e0, &e1));
            }
        }
    }
    let vertices = simplify(output);
    if vertices.len() < 3 {
        return None;
    }
    let area = signed_area(&vertices);
    if area <= EPSILON_AREA {
        return None;
    }
    Some(ConvexPolygon { vertices })
}

fn segment_line_intersection(p: &Point2, q: &Point2, e0: &Point2, e1: &Point2) -> Point2 {
    let dp = cross(e0, e1, p);
    let dq = cross(e0, e1, q);
    let t = dp / (dp - dq);
    Point2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Convex hull by monotone chain. Returns counter-clockwise vertices without
/// collinear points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for p in pts.iter() {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

fn intersection_area(a: &BevBox, b: &BevBox) -> f64 {
    polygon_intersection(&a.corners(), &b.corners())
        .map(|p| p.area())
        .unwrap_or(0.0)
}

/// Whether overlap is computed on the rotated rectangles or on their
/// axis-aligned enclosures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    #[default]
    Rotated,
    AxisAligned,
}

/// Rotated-rectangle intersection over union.
pub fn iou_bev(a: &BevBox, b: &BevBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn iou_with_mode(a: &BevBox, b: &BevBox, mode: OverlapMode) -> f64 {
    match mode {
        OverlapMode::Rotated => iou_bev(a, b),
        OverlapMode::AxisAligned => iou_bev(&a.axis_aligned_hull(), &b.axis_aligned_hull()),
    }
}

/// Generalized IoU with the convex hull of both boxes' corners as the enclosing region.
pub fn giou_bev(a: &BevBox, b: &BevBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    let mut pts: Vec<Point2> = a.corners().vertices;
    pts.extend_from_slice(b.corners().vertices());
    let hull = convex_hull(&pts);
    let hull_area = signed_area(&hull);
    if hull_area <= 0.0 {
        return iou;
    }
    // The hull contains the union, so the penalty is non-negative up to rounding.
    let penalty = ((hull_area - union) / hull_area).max(0.0);
    iou - penalty
}

pub fn giou_with_mode(a: &BevBox, b: &BevBox, mode: OverlapMode) -> f64 {
    match mode {
        OverlapMode::Rotated => giou_bev(a, b),
        OverlapMode::AxisAligned => giou_bev(&a.axis_aligned_hull(), &b.axis_aligned_hull()),
    }
}

pub fn center_distance(a: &BevBox, b: &BevBox) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bx(x: f64, y: f64, w: f64, d: f64, t: f64) -> BevBox {
        BevBox::new(x, y, w, d, t).unwrap()
    }

    fn has_vertex(poly: &ConvexPolygon, x: f64, y: f64) -> bool {
        poly.vertices()
            .iter()
            .any(|p| (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12)
    }

    #[test]
    fn wrap_angle_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert!((wrap_angle(-3.5 * PI).unwrap() - 0.5 * PI).abs() < 1e-12);
        assert!((wrap_angle(-PI).unwrap() - PI).abs() < 1e-12);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn angular_distance_examples() {
        assert_eq!(angular_distance(0.3, 0.3).unwrap(), 0.0);
        let d = angular_distance(359f64.to_radians(), 1f64.to_radians()).unwrap();
        assert!((d - 2f64.to_radians()).abs() < 1e-12);
        let d = angular_distance(PI / 2.0, -PI / 2.0).unwrap();
        assert!((d - PI).abs() < 1e-12);
        assert!(angular_distance(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BevBox::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(BevBox::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(BevBox::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!((BevBox::new(0.0, 0.0, 1.0, 1.0, 4.0).unwrap().theta - (4.0 - TAU)).abs() < 1e-12);
    }

    #[test]
    fn corners_examples() {
        let sq = bx(0.0, 0.0, 2.0, 2.0, 0.0).corners();
        for (x, y) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            assert!(has_vertex(&sq, x, y));
        }
        assert!(sq.area() > 0.0);

        let rot = bx(0.0, 0.0, 2.0, 2.0, PI / 2.0).corners();
        for (x, y) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            assert!(has_vertex(&rot, x, y));
        }

        let r = bx(1.0, 0.0, 2.0, 4.0, 0.0).corners();
        for (x, y) in [(0.0, -2.0), (2.0, -2.0), (2.0, 2.0), (0.0, 2.0)] {
            assert!(has_vertex(&r, x, y));
        }
    }

    #[test]
    fn polygon_rejects_bad_input() {
        assert!(ConvexPolygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]).is_err());
        let collinear = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
        ];
        assert!(ConvexPolygon::new(collinear).is_err());
        let dart = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(1.0, 0.5),
            Point2::new(1.0, 2.0),
        ];
        assert!(ConvexPolygon::new(dart).is_err());
        let cw = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ];
        let p = ConvexPolygon::new(cw).unwrap();
        assert!((p.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn intersection_examples() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.3).corners();
        let self_int = polygon_intersection(&a, &a).unwrap();
        assert!((self_int.area() - a.area()).abs() < 1e-12);

        let far = bx(10.0, 0.0, 1.0, 1.0, 0.0).corners();
        assert!(polygon_intersection(&a, &far).is_none());

        let u0 = bx(0.0, 0.0, 1.0, 1.0, 0.0).corners();
        let u1 = bx(0.5, 0.0, 1.0, 1.0, 0.0).corners();
        let i = polygon_intersection(&u0, &u1).unwrap();
        assert!((i.area() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn touching_edges_are_empty() {
        let u0 = bx(0.0, 0.0, 1.0, 1.0, 0.0).corners();
        let u1 = bx(1.0, 0.0, 1.0, 1.0, 0.0).corners();
        assert!(polygon_intersection(&u0, &u1).is_none());
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((iou_bev(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(iou_bev(&a, &bx(5.0, 5.0, 1.0, 1.0, 0.0)), 0.0);
        let b = bx(0.5, 0.0, 1.0, 1.0, 0.0);
        assert!((iou_bev(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn giou_examples() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((giou_bev(&a, &a) - 1.0).abs() < 1e-12);
        let touching = bx(1.0, 0.0, 1.0, 1.0, 0.0);
        assert!(giou_bev(&a, &touching).abs() < 1e-12);
        let far = bx(100.0, 0.0, 1.0, 1.0, 0.0);
        assert!(giou_bev(&a, &far) < -0.9);
    }

    #[test]
    fn axis_aligned_mode_differs_for_rotated_boxes() {
        let a = bx(0.0, 0.0, 4.0, 1.0, PI / 4.0);
        let b = bx(0.0, 0.0, 4.0, 1.0, -PI / 4.0);
        let rotated = iou_with_mode(&a, &b, OverlapMode::Rotated);
        let aligned = iou_with_mode(&a, &b, OverlapMode::AxisAligned);
        assert!((aligned - 1.0).abs() < 1e-12);
        assert!(rotated < 0.5);
    }

    #[test]
    fn center_distance_examples() {
        let o = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        assert_eq!(center_distance(&o, &o), 0.0);
        assert_eq!(center_distance(&o, &bx(3.0, 4.0, 1.0, 1.0, 0.0)), 5.0);
        assert_eq!(
            center_distance(&bx(1.0, 1.0, 1.0, 1.0, 0.0), &bx(1.0, 4.0, 1.0, 1.0, 0.0)),
            3.0
        );
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.5, 0.5),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.5, 0.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((signed_area(&h) - 1.0).abs() < 1e-15);
    }

    /// Monte-Carlo estimate of the overlap area by uniform sampling of the joint
    /// bounding rectangle, independent of the clipping code path.
    fn monte_carlo_area(a: &ConvexPolygon, b: &ConvexPolygon, n: usize, seed: u64) -> f64 {
        let all: Vec<&Point2> = a.vertices().iter().chain(b.vertices()).collect();
        let xmin = all.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let xmax = all.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let ymin = all.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let ymax = all.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..n {
            let p = Point2::new(rng.random_range(xmin..xmax), rng.random_range(ymin..ymax));
            if a.contains(&p) && b.contains(&p) {
                hits += 1;
            }
        }
        hits as f64 / n as f64 * (xmax - xmin) * (ymax - ymin)
    }

    #[test]
    fn intersection_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 5 {
            let a = bx(0.0, 0.0, rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(-PI..PI));
            let b = bx(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(1.0..4.0),
                rng.random_range(1.0..4.0),
                rng.random_range(-PI..PI),
            );
            let exact = match polygon_intersection(&a.corners(), &b.corners()) {
                Some(p) => p.area(),
                None => continue,
            };
            if exact < 0.5 {
                continue;
            }
            let mc = monte_carlo_area(&a.corners(), &b.corners(), 1_000_000, checked as u64);
            assert!(
                (mc - exact).abs() / exact < 0.01,
                "exact {exact} vs monte-carlo {mc}"
            );
            checked += 1;
        }
    }

    fn arb_box() -> impl Strategy<Value = BevBox> {
        (-5.0..5.0f64, -5.0..5.0f64, 0.2..5.0f64, 0.2..5.0f64, -PI..PI)
            .prop_map(|(x, y, w, d, t)| BevBox::new(x, y, w, d, t).unwrap())
    }

    proptest! {
        #[test]
        fn overlap_bounds(a in arb_box(), b in arb_box()) {
            let iou = iou_bev(&a, &b);
            let giou = giou_bev(&a, &b);
            prop_assert!((0.0..=1.0).contains(&iou));
            prop_assert!(giou <= iou + 1e-12);
            prop_assert!(giou > -1.0);
            prop_assert!((iou - iou_bev(&b, &a)).abs() < 1e-9);
        }

        #[test]
        fn corners_area_is_exact(b in arb_box()) {
            let area = b.corners().area();
            prop_assert!((area - b.w * b.d).abs() <= 1e-12 * b.w * b.d);
        }

        #[test]
        fn wrap_is_idempotent(t in -100.0..100.0f64) {
            let w = wrap_angle(t).unwrap();
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
            let k = ((t - w) / TAU).round();
            prop_assert!((t - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn angular_distance_symmetric(a in -20.0..20.0f64, b in -20.0..20.0f64) {
            let d = angular_distance(a, b).unwrap();
            prop_assert_eq!(d, angular_distance(b, a).unwrap());
            prop_assert!((0.0..=PI).contains(&d));
        }
    }
}
