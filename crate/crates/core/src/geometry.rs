//! Points, segments, polygon masks and the handful of fitting and
//! intersection routines the rest of the pipeline is built on.
//!
//! Pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and is sampled at its center
//! `(i + 0.5, j + 0.5)`. Rasterization and every pixel count use this rule.

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar type the geometric core is written against.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {}

/// Segments shorter than this are degenerate.
pub const SEGMENT_EPS: f64 = 1e-9;
/// Lines closer than this angle (radians) are parallel.
pub const PARALLEL_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Point2<U> {
        Point2::new(U::from(self.x).expect("castable"), U::from(self.y).expect("castable"))
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSegment<T> {
    pub a: Point2<T>,
    pub b: Point2<T>,
}

impl<T: Scalar> LineSegment<T> {
    pub fn new(a: Point2<T>, b: Point2<T>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::DegenerateInput("non-finite segment endpoint"));
        }
        if a.dist(b) <= T::lit(SEGMENT_EPS) {
            return Err(Error::DegenerateInput("segment endpoints coincide"));
        }
        Ok(Self { a, b })
    }

    pub fn direction(&self) -> Point2<T> {
        self.b - self.a
    }

    pub fn unit_direction(&self) -> Point2<T> {
        let d = self.direction();
        d * (T::one() / d.norm())
    }

    pub fn length(&self) -> T {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Point2<T> {
        self.a.lerp(self.b, T::lit(0.5))
    }

    /// Orientation of the undirected line in `[0, pi)`.
    pub fn orientation(&self) -> T {
        let d = self.direction();
        let mut t = d.y.atan2(d.x);
        let pi = T::lit(std::f64::consts::PI);
        if t < T::zero() {
            t = t + pi;
        }
        if t >= pi {
            t = t - pi;
        }
        t
    }

    /// Acute angle between the two undirected lines, in `[0, pi/2]`.
    pub fn angle_between(&self, other: &Self) -> T {
        let (d1, d2) = (self.direction(), other.direction());
        d1.cross(d2).abs().atan2(d1.dot(d2).abs())
    }

    /// Parameter of the orthogonal projection of `p` on the infinite line.
    pub fn project(&self, p: Point2<T>) -> T {
        let d = self.direction();
        (p - self.a).dot(d) / d.dot(d)
    }

    pub fn point_at(&self, t: T) -> Point2<T> {
        self.a.lerp(self.b, t)
    }

    pub fn distance_to_line(&self, p: Point2<T>) -> T {
        let d = self.direction();
        d.cross(p - self.a).abs() / d.norm()
    }

    pub fn distance_to_point(&self, p: Point2<T>) -> T {
        self.closest_point(p).dist(p)
    }

    pub fn closest_point(&self, p: Point2<T>) -> Point2<T> {
        let t = self.project(p).max(T::zero()).min(T::one());
        self.point_at(t)
    }

    /// X coordinate of the infinite line at height `y`, if the line is not horizontal.
    pub fn x_at_y(&self, y: T) -> Option<T> {
        let d = self.direction();
        if d.y.abs() <= T::lit(SEGMENT_EPS) {
            return None;
        }
        Some(self.a.x + (y - self.a.y) * d.x / d.y)
    }

    /// Y coordinate of the infinite line at `x`, if the line is not vertical.
    pub fn y_at_x(&self, x: T) -> Option<T> {
        let d = self.direction();
        if d.x.abs() <= T::lit(SEGMENT_EPS) {
            return None;
        }
        Some(self.a.y + (x - self.a.x) * d.y / d.x)
    }
}

/// Total-least-squares line through `points`, clipped to their extremal
/// projections.
pub fn fit_segment<T: Scalar>(points: &[Point2<T>]) -> Result<LineSegment<T>> {
    if points.len() < 2 {
        return Err(Error::DegenerateInput("need at least two points"));
    }
    let n = T::from_usize(points.len()).unwrap();
    let c = points.iter().fold(Point2::new(T::zero(), T::zero()), |acc, &p| acc + p) * (T::one() / n);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &p in points {
        let d = p - c;
        sxx = sxx + d.x * d.x;
        sxy = sxy + d.x * d.y;
        syy = syy + d.y * d.y;
    }
    if sxx + syy <= T::lit(SEGMENT_EPS * SEGMENT_EPS) {
        return Err(Error::DegenerateInput("all points coincide"));
    }
    // principal axis of the 2x2 scatter matrix
    let theta = T::lit(0.5) * (T::lit(2.0) * sxy).atan2(sxx - syy);
    let dir = Point2::new(theta.cos(), theta.sin());
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for &p in points {
        let t = (p - c).dot(dir);
        lo = lo.min(t);
        hi = hi.max(t);
    }
    LineSegment::new(c + dir * lo, c + dir * hi)
}

/// Intersection of the infinite lines through `a` and `b`.
pub fn intersect<T: Scalar>(a: &LineSegment<T>, b: &LineSegment<T>) -> Option<Point2<T>> {
    let (d1, d2) = (a.direction(), b.direction());
    let denom = d1.cross(d2);
    if denom.abs() <= T::lit(PARALLEL_EPS.sin()) * d1.norm() * d2.norm() {
        return None;
    }
    let t = (b.a - a.a).cross(d2) / denom;
    let p = a.point_at(t);
    p.is_finite().then_some(p)
}

/// True if the closed segments share at least one point.
pub fn segments_intersect<T: Scalar>(s: &LineSegment<T>, t: &LineSegment<T>) -> bool {
    let orient = |a: Point2<T>, b: Point2<T>, c: Point2<T>| (b - a).cross(c - a);
    let on = |a: Point2<T>, b: Point2<T>, c: Point2<T>| {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    let (d1, d2) = (orient(t.a, t.b, s.a), orient(t.a, t.b, s.b));
    let (d3, d4) = (orient(s.a, s.b, t.a), orient(s.a, s.b, t.b));
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on(t.a, t.b, s.a))
        || (d2 == z && on(t.a, t.b, s.b))
        || (d3 == z && on(s.a, s.b, t.a))
        || (d4 == z && on(s.a, s.b, t.b))
}

/// Angle between the segment's direction and the direction from its midpoint
/// to `p`, folded into `[0, pi/2]`.
pub fn angle_to<T: Scalar>(seg: &LineSegment<T>, p: Point2<T>) -> T {
    let d = seg.direction();
    let v = p - seg.midpoint();
    if v.norm() <= T::lit(SEGMENT_EPS) {
        return T::zero();
    }
    d.cross(v).abs().atan2(d.dot(v).abs())
}

/// Boolean occupancy raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolygonMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl PolygonMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.bits[y * self.width + x] = true;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &PolygonMask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn intersection_count(&self, other: &PolygonMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    pub fn union_count(&self, other: &PolygonMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a || b).count()
    }
}

/// Even-odd scanline fill sampled at pixel centers.
///
/// Crossings are computed from a canonical endpoint order and spans are
/// half-open, so polygons that tile a region share every boundary pixel with
/// exactly one owner.
pub fn rasterize_polygon<T: Scalar>(vertices: &[Point2<T>], width: usize, height: usize) -> Result<PolygonMask> {
    if vertices.len() < 3 {
        return Err(Error::DegenerateInput("polygon needs at least three vertices"));
    }
    if vertices.iter().any(|p| !p.is_finite()) {
        return Err(Error::DegenerateInput("non-finite polygon vertex"));
    }
    let mut twice_area = T::zero();
    for i in 0..vertices.len() {
        let (p, q) = (vertices[i], vertices[(i + 1) % vertices.len()]);
        twice_area = twice_area + p.cross(q);
    }
    if twice_area.abs() <= T::lit(1e-12) {
        return Err(Error::DegenerateInput("polygon has zero area"));
    }
    let mut mask = PolygonMask::empty(width, height);
    fill_polygon(vertices, width, height, |x, y| mask.set(x, y));
    Ok(mask)
}

/// Calls `put` for every pixel whose center lies inside the polygon. No
/// degeneracy checks; zero-area polygons simply produce no pixels.
pub fn fill_polygon<T: Scalar>(vertices: &[Point2<T>], width: usize, height: usize, mut put: impl FnMut(usize, usize)) {
    let n = vertices.len();
    if n < 3 {
        return;
    }
    let (mut ymin, mut ymax) = (T::infinity(), T::neg_infinity());
    for p in vertices {
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    let half = T::lit(0.5);
    let row_lo = (ymin - half).ceil().max(T::zero()).to_i64().unwrap_or(0) as usize;
    let row_hi = ((ymax - half).ceil().to_i64().unwrap_or(0).max(0) as usize).min(height);
    let mut xs: Vec<T> = Vec::with_capacity(n);
    for row in row_lo..row_hi {
        let yc = T::from_usize(row).unwrap() + half;
        xs.clear();
        for i in 0..n {
            let (mut p, mut q) = (vertices[i], vertices[(i + 1) % n]);
            if (q.y, q.x) < (p.y, p.x) {
                std::mem::swap(&mut p, &mut q);
            }
            if p.y == q.y || yc < p.y || yc >= q.y {
                continue;
            }
            xs.push(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for span in xs.chunks_exact(2) {
            let lo = (span[0] - half).ceil().max(T::zero());
            let hi = (span[1] - half).ceil().min(T::from_usize(width).unwrap());
            let (lo, hi) = (lo.to_i64().unwrap_or(0), hi.to_i64().unwrap_or(0));
            for col in lo..hi {
                put(col as usize, row);
            }
        }
    }
}

/// Visits the pixels of a segment stroked `width_px` pixels wide.
///
/// One pixel run is emitted per major-axis pixel center within the segment's
/// extent; across the stroke it covers the `width_px` pixels whose centers
/// fall in `(m - w/2, m + w/2]` around the line. With `width_px = 1` this is
/// the pixel containing the line point, i.e. the usual DDA/Bresenham set.
pub fn stroke_segment<T: Scalar>(
    seg: &LineSegment<T>,
    width_px: usize,
    width: usize,
    height: usize,
    mut put: impl FnMut(usize, usize),
) {
    if width_px == 0 {
        return;
    }
    let d = seg.direction();
    let steep = d.y.abs() > d.x.abs();
    let (major_len, minor_len) = if steep { (height, width) } else { (width, height) };
    let (a_major, b_major) = if steep { (seg.a.y, seg.b.y) } else { (seg.a.x, seg.b.x) };
    let lo = a_major.min(b_major);
    let hi = a_major.max(b_major);
    let half = T::lit(0.5);
    let w = T::from_usize(width_px).unwrap();
    let start = (lo - half).ceil().max(T::zero()).to_i64().unwrap_or(0);
    let end = (hi - half)
        .floor()
        .min(T::from_usize(major_len).unwrap() - T::one())
        .to_i64()
        .unwrap_or(-1);
    for k in start..=end {
        let c = T::from_i64(k).unwrap() + half;
        let m = if steep { seg.x_at_y(c) } else { seg.y_at_x(c) };
        let Some(m) = m else { continue };
        let first = (m - w * half - half).floor().to_i64().unwrap_or(0) + 1;
        for off in 0..width_px as i64 {
            let minor = first + off;
            if minor < 0 || minor >= minor_len as i64 {
                continue;
            }
            if steep {
                put(minor as usize, k as usize);
            } else {
                put(k as usize, minor as usize);
            }
        }
    }
}
