//! Planar predicates and exact solvers used to label instances and verify
//! model outputs.
//!
//! All predicates work in double precision with a fixed tolerance on
//! determinant signs (`EPS_GEO`). Inputs are random uniform points, so
//! true degeneracies have measure zero; anything within tolerance is
//! reported as the degenerate case (`Collinear` / `OnBoundary`) and the
//! callers decide what to do with it.

mod delaunay;
mod hull;
mod tsp;

pub use delaunay::delaunay_triangulate;
pub use hull::convex_hull;
pub use tsp::{held_karp, nearest_neighbor_tour, tour_length, two_opt, DEFAULT_HK_MAX};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Tolerance applied to determinant signs in all predicates.
pub const EPS_GEO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// An ordered list of planar points; the problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        PointSet { points }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        PointSet {
            points: pairs.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Exact-equality duplicate scan.
    pub fn has_duplicates(&self) -> bool {
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                if self.points[i] == self.points[j] {
                    return true;
                }
            }
        }
        false
    }
}

impl std::ops::Index<usize> for PointSet {
    type Output = Point;
    fn index(&self, i: usize) -> &Point {
        &self.points[i]
    }
}

/// Triangle as indices into a [`PointSet`], canonicalized to `a < b < c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TriangleIdx {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl TriangleIdx {
    /// Canonicalizes the index order. Panics on a repeated index; callers
    /// dealing with untrusted triples should check distinctness first.
    pub fn new(a: usize, b: usize, c: usize) -> Self {
        assert!(a != b && b != c && a != c, "triangle indices must be distinct");
        let mut v = [a, b, c];
        v.sort_unstable();
        TriangleIdx { a: v[0], b: v[1], c: v[2] }
    }

    pub fn indices(&self) -> [usize; 3] {
        [self.a, self.b, self.c]
    }

    pub fn contains(&self, i: usize) -> bool {
        self.a == i || self.b == i || self.c == i
    }
}

/// A closed tour: a permutation of `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
}

impl Tour {
    pub fn new(order: Vec<usize>) -> Self {
        Tour { order }
    }

    /// True iff `order` is a permutation of `0..m`.
    pub fn is_valid(&self, m: usize) -> bool {
        if self.order.len() != m {
            return false;
        }
        let mut seen = vec![false; m];
        for &i in &self.order {
            if i >= m || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Ccw,
    Cw,
    Collinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Inside,
    OnBoundary,
    Outside,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeometryError {
    DegenerateTriangle,
    TooFewPoints { got: usize, need: usize },
    AllCollinear,
    DuplicatePoints,
    TooManyPoints { got: usize, max: usize },
    InvalidTour,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::DegenerateTriangle => write!(f, "degenerate (collinear) triangle"),
            GeometryError::TooFewPoints { got, need } => {
                write!(f, "too few points: got {got}, need at least {need}")
            }
            GeometryError::AllCollinear => write!(f, "all points are collinear"),
            GeometryError::DuplicatePoints => write!(f, "duplicate points in input"),
            GeometryError::TooManyPoints { got, max } => {
                write!(f, "too many points: got {got}, max {max}")
            }
            GeometryError::InvalidTour => write!(f, "tour is not a permutation of the points"),
        }
    }
}

impl std::error::Error for GeometryError {}

/// Sign of the cross product `(b - a) x (c - a)`.
pub fn orient2d(a: Point, b: Point, c: Point) -> Orientation {
    let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if det.abs() <= EPS_GEO {
        Orientation::Collinear
    } else if det > 0.0 {
        Orientation::Ccw
    } else {
        Orientation::Cw
    }
}

/// Raw signed cross product; callers that need the magnitude use this.
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Circumcircle of a non-degenerate triangle.
pub fn circumcircle(a: Point, b: Point, c: Point) -> Result<Circle, GeometryError> {
    if orient2d(a, b, c) == Orientation::Collinear {
        return Err(GeometryError::DegenerateTriangle);
    }
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let aa = a.x * a.x + a.y * a.y;
    let bb = b.x * b.x + b.y * b.y;
    let cc = c.x * c.x + c.y * c.y;
    let ux = (aa * (b.y - c.y) + bb * (c.y - a.y) + cc * (a.y - b.y)) / d;
    let uy = (aa * (c.x - b.x) + bb * (a.x - c.x) + cc * (b.x - a.x)) / d;
    let center = Point::new(ux, uy);
    Ok(Circle { center, radius_sq: center.dist_sq(&a) })
}

/// Strict circumcircle containment via the incircle determinant, with the
/// sign adjusted for triangle orientation.
pub fn in_circumcircle(a: Point, b: Point, c: Point, q: Point) -> Result<Position, GeometryError> {
    let orient = orient2d(a, b, c);
    if orient == Orientation::Collinear {
        return Err(GeometryError::DegenerateTriangle);
    }
    let (ax, ay) = (a.x - q.x, a.y - q.y);
    let (bx, by) = (b.x - q.x, b.y - q.y);
    let (cx, cy) = (c.x - q.x, c.y - q.y);
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    let det = if orient == Orientation::Ccw { det } else { -det };
    if det.abs() <= EPS_GEO {
        Ok(Position::OnBoundary)
    } else if det > 0.0 {
        Ok(Position::Inside)
    } else {
        Ok(Position::Outside)
    }
}

/// Incenter: the side-length-weighted average of the vertices.
pub fn incenter(a: Point, b: Point, c: Point) -> Result<Point, GeometryError> {
    if orient2d(a, b, c) == Orientation::Collinear {
        return Err(GeometryError::DegenerateTriangle);
    }
    let la = b.dist(&c);
    let lb = c.dist(&a);
    let lc = a.dist(&b);
    let s = la + lb + lc;
    Ok(Point::new(
        (la * a.x + lb * b.x + lc * c.x) / s,
        (la * a.y + lb * b.y + lc * c.y) / s,
    ))
}

/// Absolute shoelace area of the polygon traced by `boundary`.
///
/// A self-intersecting boundary yields the raw shoelace value; callers that
/// care flag that case separately.
pub fn polygon_area(ps: &PointSet, boundary: &[usize]) -> f64 {
    signed_polygon_area(ps, boundary).abs()
}

/// Signed shoelace area (positive for CCW traversal).
pub fn signed_polygon_area(ps: &PointSet, boundary: &[usize]) -> f64 {
    let n = boundary.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 0..n {
        let p = ps[boundary[k]];
        let q = ps[boundary[(k + 1) % n]];
        sum += p.x * q.y - q.x * p.y;
    }
    sum / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn orient2d_basic_cases() {
        assert_eq!(orient2d(pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0)), Orientation::Ccw);
        assert_eq!(orient2d(pt(0.0, 0.0), pt(1.0, 1.0), pt(2.0, 2.0)), Orientation::Collinear);
        assert_eq!(orient2d(pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 0.0)), Orientation::Cw);
    }

    #[test]
    fn circumcircle_right_triangle() {
        let c = circumcircle(pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0)).unwrap();
        assert!((c.center.x - 0.5).abs() < 1e-15);
        assert!((c.center.y - 0.5).abs() < 1e-15);
        assert!((c.radius_sq - 0.5).abs() < 1e-15);
    }

    #[test]
    fn circumcircle_isoceles() {
        let c = circumcircle(pt(0.0, 0.0), pt(2.0, 0.0), pt(1.0, 1.0)).unwrap();
        assert!((c.center.x - 1.0).abs() < 1e-15);
        assert!(c.center.y.abs() < 1e-15);
        assert!((c.radius_sq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circumcircle_collinear_fails() {
        assert_eq!(
            circumcircle(pt(0.0, 0.0), pt(1.0, 1.0), pt(2.0, 2.0)),
            Err(GeometryError::DegenerateTriangle)
        );
    }

    #[test]
    fn circumcircle_center_equidistant() {
        let (a, b, c) = (pt(0.13, 0.71), pt(0.52, 0.08), pt(0.91, 0.64));
        let circ = circumcircle(a, b, c).unwrap();
        for p in [a, b, c] {
            assert!((circ.center.dist_sq(&p) - circ.radius_sq).abs() < 1e-12);
        }
    }

    #[test]
    fn in_circumcircle_cases() {
        let (a, b, c) = (pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0));
        assert_eq!(in_circumcircle(a, b, c, pt(1.0 / 3.0, 1.0 / 3.0)).unwrap(), Position::Inside);
        assert_eq!(in_circumcircle(a, b, c, pt(1.0, 1.0)).unwrap(), Position::OnBoundary);
        assert_eq!(in_circumcircle(a, b, c, pt(2.0, 2.0)).unwrap(), Position::Outside);
        // Orientation of the triangle must not change the answer.
        assert_eq!(in_circumcircle(a, c, b, pt(1.0 / 3.0, 1.0 / 3.0)).unwrap(), Position::Inside);
    }

    #[test]
    fn incenter_right_isoceles() {
        let i = incenter(pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0)).unwrap();
        let expect = 1.0 - std::f64::consts::SQRT_2 / 2.0;
        assert!((i.x - expect).abs() < 1e-12);
        assert!((i.y - expect).abs() < 1e-12);
    }

    #[test]
    fn incenter_equilateral_is_centroid() {
        let (a, b, c) = (pt(0.0, 0.0), pt(1.0, 0.0), pt(0.5, 3f64.sqrt() / 2.0));
        let i = incenter(a, b, c).unwrap();
        assert!((i.x - 0.5).abs() < 1e-12);
        assert!((i.y - 3f64.sqrt() / 6.0).abs() < 1e-12);
    }

    #[test]
    fn incenter_collinear_fails() {
        assert_eq!(
            incenter(pt(0.0, 0.0), pt(1.0, 1.0), pt(2.0, 2.0)),
            Err(GeometryError::DegenerateTriangle)
        );
    }

    #[test]
    fn polygon_area_cases() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert!((polygon_area(&ps, &[0, 1, 2, 3]) - 1.0).abs() < 1e-15);
        // Clockwise traversal gives the same absolute area.
        assert!((polygon_area(&ps, &[3, 2, 1, 0]) - 1.0).abs() < 1e-15);
        let tri = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        assert!((polygon_area(&tri, &[0, 1, 2]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_idx_canonicalizes() {
        assert_eq!(TriangleIdx::new(2, 0, 1), TriangleIdx { a: 0, b: 1, c: 2 });
    }
}
