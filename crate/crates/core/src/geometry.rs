//! Planar geometry primitives: points, poses, oriented rectangles, polygons and
//! polylines.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Tolerance used for closed-set boundary tests.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Left-hand normal (rotated +90°).
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Planar pose. `yaw` is kept in (-π, π] by the constructors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point2 {
        let (s, c) = self.yaw.sin_cos();
        Point2::new(c, s)
    }

    /// Maps a point expressed in this pose's local frame into the parent frame.
    pub fn transform_point(&self, local: Point2) -> Point2 {
        local.rotate(self.yaw) + self.position()
    }

    /// Maps a point of the parent frame into this pose's local frame.
    pub fn inverse_transform_point(&self, world: Point2) -> Point2 {
        (world - self.position()).rotate(-self.yaw)
    }

    /// `self ∘ local`: a pose given in this pose's frame, expressed in the parent frame.
    pub fn compose(&self, local: &Pose2) -> Pose2 {
        let p = self.transform_point(local.position());
        Pose2::new(p.x, p.y, self.yaw + local.yaw)
    }

    /// Expresses `world` in this pose's local frame.
    pub fn relative(&self, world: &Pose2) -> Pose2 {
        let p = self.inverse_transform_point(world.position());
        Pose2::new(p.x, p.y, world.yaw - self.yaw)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }
}

/// Rectangle with arbitrary orientation, stored as four CCW corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub corners: [Point2; 4],
}

impl OrientedRect {
    pub fn center(&self) -> Point2 {
        let s = self.corners.iter().fold(Point2::default(), |acc, &c| acc + c);
        s * 0.25
    }

    pub fn area(&self) -> f64 {
        polygon_signed_area(&self.corners)
    }

    /// Same rectangle with the center shifted by `offset`.
    pub fn translated(&self, offset: Point2) -> OrientedRect {
        OrientedRect {
            corners: self.corners.map(|c| c + offset),
        }
    }

    fn axes(&self) -> [Point2; 2] {
        [self.corners[1] - self.corners[0], self.corners[2] - self.corners[1]]
    }

    fn project(&self, axis: Point2) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.corners {
            let d = c.dot(axis);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }

    /// Closed-set containment.
    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, &self.corners)
    }
}

/// Vehicle footprint centered on `pose`: `length` along the heading, `width` across.
pub fn ego_footprint(pose: &Pose2, width: f64, length: f64) -> OrientedRect {
    let hl = 0.5 * length;
    let hw = 0.5 * width;
    let local = [
        Point2::new(-hl, -hw),
        Point2::new(hl, -hw),
        Point2::new(hl, hw),
        Point2::new(-hl, hw),
    ];
    OrientedRect {
        corners: local.map(|c| pose.transform_point(c)),
    }
}

/// Separating-axis test. Touching rectangles count as intersecting.
pub fn obb_intersects(a: &OrientedRect, b: &OrientedRect) -> bool {
    for axis in a.axes().into_iter().chain(b.axes()) {
        let n = axis.norm();
        if n == 0.0 {
            continue;
        }
        let axis = axis * (1.0 / n);
        let (alo, ahi) = a.project(axis);
        let (blo, bhi) = b.project(axis);
        if ahi < blo - BOUNDARY_EPS || bhi < alo - BOUNDARY_EPS {
            return false;
        }
    }
    true
}

/// Shoelace area; positive for counter-clockwise vertex order.
pub fn polygon_signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.cross(b);
    }
    0.5 * acc
}

/// Closest point on segment `[a, b]` to `p`, as (parameter in [0,1], point).
pub fn closest_on_segment(p: Point2, a: Point2, b: Point2) -> (f64, Point2) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (0.0, a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (t, a + ab * t)
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (_, c) = closest_on_segment(p, a, b);
    p.distance(c)
}

fn orientation(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    p.x >= a.x.min(b.x) - BOUNDARY_EPS
        && p.x <= a.x.max(b.x) + BOUNDARY_EPS
        && p.y >= a.y.min(b.y) - BOUNDARY_EPS
        && p.y <= a.y.max(b.y) + BOUNDARY_EPS
}

/// Closed segment intersection (shared endpoints and collinear overlap count).
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// Closed-set point-in-polygon: boundary points (within [`BOUNDARY_EPS`]) are inside.
pub fn point_in_polygon(p: Point2, vertices: &[Point2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if point_segment_distance(p, a, b) <= BOUNDARY_EPS {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// True when no two non-adjacent edges meet.
pub fn polygon_is_simple(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a1 = vertices[i];
        let a2 = vertices[(i + 1) % n];
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let b1 = vertices[j];
            let b2 = vertices[(j + 1) % n];
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    pub segment: usize,
    pub point: Point2,
    pub distance: f64,
    /// Arc length from the first vertex to the projected point.
    pub arc_length: f64,
    /// Unit direction of the segment the point projects onto.
    pub direction: Point2,
}

/// Projects `p` onto the nearest segment of `points`. Ties go to the earliest
/// segment. Returns `None` for polylines with fewer than two vertices.
pub fn project_onto_polyline(p: Point2, points: &[Point2]) -> Option<PolylineProjection> {
    if points.len() < 2 {
        return None;
    }
    let mut best: Option<PolylineProjection> = None;
    let mut walked = 0.0;
    for (i, w) in points.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let seg = b - a;
        let seg_len = seg.norm();
        let (t, c) = closest_on_segment(p, a, b);
        let d = p.distance(c);
        if best.is_none_or(|bst| d < bst.distance) {
            let direction = if seg_len > 0.0 {
                seg * (1.0 / seg_len)
            } else {
                Point2::new(1.0, 0.0)
            };
            best = Some(PolylineProjection {
                segment: i,
                point: c,
                distance: d,
                arc_length: walked + t * seg_len,
                direction,
            });
        }
        walked += seg_len;
    }
    best
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Axis-aligned box, used for image-space detections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            self.min,
            Point2::new(self.max.x, self.min.y),
            self.max,
            Point2::new(self.min.x, self.max.y),
        ]
    }

    /// Closed overlap test between the box and segment `[a, b]`.
    pub fn intersects_segment(&self, a: Point2, b: Point2) -> bool {
        if self.contains(a) || self.contains(b) {
            return true;
        }
        let c = self.corners();
        (0..4).any(|i| segments_intersect(a, b, c[i], c[(i + 1) % 4]))
    }

    /// Closed overlap test between the box and an arbitrary simple polygon.
    pub fn intersects_polygon(&self, vertices: &[Point2]) -> bool {
        let n = vertices.len();
        if n == 0 {
            return false;
        }
        if vertices.iter().any(|&v| self.contains(v)) {
            return true;
        }
        if self.corners().iter().any(|&c| point_in_polygon(c, vertices)) {
            return true;
        }
        (0..n).any(|i| self.intersects_segment(vertices[i], vertices[(i + 1) % n]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5 * PI) + 0.5 * PI).abs() < 1e-15);
        for k in -20..20 {
            let a = k as f64 * 0.7;
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            let turns = (a - w) / (2.0 * PI);
            assert!((turns - turns.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn footprint_axis_aligned() {
        let r = ego_footprint(&Pose2::identity(), 2.0, 4.0);
        let expect = [
            Point2::new(-2.0, -1.0),
            Point2::new(2.0, -1.0),
            Point2::new(2.0, 1.0),
            Point2::new(-2.0, 1.0),
        ];
        assert_eq!(r.corners, expect);
        assert!((r.area() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn footprint_quarter_turn_swaps_extents() {
        let r = ego_footprint(&Pose2::new(0.0, 0.0, PI / 2.0), 2.0, 4.0);
        let xs: Vec<f64> = r.corners.iter().map(|c| c.x).collect();
        let ys: Vec<f64> = r.corners.iter().map(|c| c.y).collect();
        let span = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        assert!((span(&xs) - 2.0).abs() < 1e-12);
        assert!((span(&ys) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn obb_basic_cases() {
        let a = ego_footprint(&Pose2::identity(), 1.0, 1.0);
        assert!(obb_intersects(&a, &a));
        let b = ego_footprint(&Pose2::new(10.0, 0.0, 0.0), 1.0, 1.0);
        assert!(!obb_intersects(&a, &b));
        // Touching edge-to-edge.
        let c = ego_footprint(&Pose2::new(1.0, 0.0, 0.0), 1.0, 1.0);
        assert!(obb_intersects(&a, &c));
    }

    #[test]
    fn polygon_boundary_is_inside() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ];
        assert!(point_in_polygon(Point2::new(1.0, 1.0), &sq));
        assert!(point_in_polygon(Point2::new(2.0, 2.0), &sq));
        assert!(point_in_polygon(Point2::new(1.0, 0.0), &sq));
        assert!(!point_in_polygon(Point2::new(3.0, 1.0), &sq));
        assert!(polygon_is_simple(&sq));
        let bowtie = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 2.0),
        ];
        assert!(!polygon_is_simple(&bowtie));
    }

    #[test]
    fn polyline_projection_arc_length() {
        let line = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0), Point2::new(10.0, 10.0)];
        let pr = project_onto_polyline(Point2::new(11.0, 4.0), &line).unwrap();
        assert_eq!(pr.segment, 1);
        assert!((pr.arc_length - 14.0).abs() < 1e-12);
        assert!((pr.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aabb_polygon_overlap() {
        let b = Aabb {
            min: Point2::new(0.0, 0.0),
            max: Point2::new(1.0, 1.0),
        };
        let big = [
            Point2::new(-5.0, -5.0),
            Point2::new(5.0, -5.0),
            Point2::new(5.0, 5.0),
            Point2::new(-5.0, 5.0),
        ];
        assert!(b.intersects_polygon(&big));
        let far = big.map(|p| p + Point2::new(20.0, 0.0));
        assert!(!b.intersects_polygon(&far));
    }
}
