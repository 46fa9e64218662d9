//! Generic layout representation: an ordered list of wall-wall boundaries,
//! each joining a wall-wall-floor corner to a wall-wall-ceiling corner, plus
//! floor/ceiling presence flags.
//!
//! The first boundary may sit on the left image edge and the last on the
//! right edge; such edge boundaries are virtual (they carry the floor and
//! ceiling heights of partially visible side walls) and do not add a wall.
//! Floor and ceiling polylines are closed through the image corners, so the
//! floor, ceiling and wall polygons tile the image.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fill_polygon, segments_intersect, stroke_segment, LineSegment, PolygonMask};
use crate::raster::Planes;
use crate::{Point, Segment};

/// Corners within this distance of an image side are on that side.
pub const EDGE_TOL: f64 = 1e-6;
pub const DEFAULT_STROKE_PX: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "BoundaryDoc", into = "BoundaryDoc")]
pub struct WwBoundary {
    pub floor: Point,
    pub ceil: Point,
    pub floor_visible: bool,
    pub ceil_visible: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    floor_visible: bool,
    ceil_visible: bool,
}

impl From<BoundaryDoc> for WwBoundary {
    fn from(d: BoundaryDoc) -> Self {
        Self {
            floor: Point::new(d.fx, d.fy),
            ceil: Point::new(d.cx, d.cy),
            floor_visible: d.floor_visible,
            ceil_visible: d.ceil_visible,
        }
    }
}

impl From<WwBoundary> for BoundaryDoc {
    fn from(b: WwBoundary) -> Self {
        Self {
            fx: b.floor.x,
            fy: b.floor.y,
            cx: b.ceil.x,
            cy: b.ceil.y,
            floor_visible: b.floor_visible,
            ceil_visible: b.ceil_visible,
        }
    }
}

impl WwBoundary {
    pub fn new(floor: Point, ceil: Point) -> Self {
        Self {
            floor,
            ceil,
            floor_visible: true,
            ceil_visible: true,
        }
    }

    pub fn segment(&self) -> Option<Segment> {
        LineSegment::new(self.floor, self.ceil).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub image_width: usize,
    pub image_height: usize,
    pub has_ceiling: bool,
    pub has_floor: bool,
    pub boundaries: Vec<WwBoundary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptyImage,
    NonFinite {
        index: usize,
    },
    CornerOutsideImage {
        index: usize,
    },
    InvertedBoundary {
        index: usize,
    },
    OrderingViolation {
        index: usize,
    },
    CrossingBoundaries {
        index: usize,
    },
    /// A corner is off the image border although its surface is absent.
    SurfaceFlagMismatch {
        index: usize,
    },
    /// Floor or ceiling present but no boundary carries its height.
    MissingCorners,
}

/// The three boundary kinds, in boundary-image channel order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryClass {
    WallWall,
    WallFloor,
    WallCeiling,
}

impl BoundaryClass {
    pub const ALL: [BoundaryClass; 3] = [
        BoundaryClass::WallWall,
        BoundaryClass::WallFloor,
        BoundaryClass::WallCeiling,
    ];

    pub fn channel(self) -> usize {
        self as usize
    }
}

/// Surface label values; also the channel order of segmentation maps.
pub const LABEL_WALL: u8 = 0;
pub const LABEL_FLOOR: u8 = 1;
pub const LABEL_CEILING: u8 = 2;

/// 3-channel boundary raster (ww, wf, wc).
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryImage(pub Planes);

#[derive(Clone, Debug)]
pub struct SurfaceMasks {
    pub floor: PolygonMask,
    pub ceiling: PolygonMask,
    pub walls: Vec<PolygonMask>,
}

impl SurfaceMasks {
    pub fn wall_union(&self, width: usize, height: usize) -> PolygonMask {
        let mut m = PolygonMask::empty(width, height);
        for w in &self.walls {
            m.union_with(w);
        }
        m
    }
}

impl Layout {
    pub fn new(image_width: usize, image_height: usize, has_ceiling: bool, has_floor: bool) -> Self {
        Self {
            image_width,
            image_height,
            has_ceiling,
            has_floor,
            boundaries: Vec::new(),
        }
    }

    pub fn with_boundaries(mut self, boundaries: Vec<WwBoundary>) -> Self {
        self.boundaries = boundaries;
        self
    }

    pub fn width_f(&self) -> f64 {
        self.image_width as f64
    }

    pub fn height_f(&self) -> f64 {
        self.image_height as f64
    }

    pub fn diagonal(&self) -> f64 {
        self.width_f().hypot(self.height_f())
    }

    pub fn is_left_edge(&self, b: &WwBoundary) -> bool {
        b.floor.x <= EDGE_TOL && b.ceil.x <= EDGE_TOL
    }

    pub fn is_right_edge(&self, b: &WwBoundary) -> bool {
        let w = self.width_f() - EDGE_TOL;
        b.floor.x >= w && b.ceil.x >= w
    }

    pub fn is_edge_boundary(&self, b: &WwBoundary) -> bool {
        self.is_left_edge(b) || self.is_right_edge(b)
    }

    /// Boundaries that are actual wall-wall lines (not virtual edge boundaries).
    pub fn interior_boundaries(&self) -> impl Iterator<Item = (usize, &WwBoundary)> {
        self.boundaries
            .iter()
            .enumerate()
            .filter(|(_, b)| !self.is_edge_boundary(b))
    }

    pub fn n_walls(&self) -> usize {
        self.separators().len() - 1
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.image_width == 0 || self.image_height == 0 {
            out.push(Violation::EmptyImage);
            return out;
        }
        let (w, h) = (self.width_f(), self.height_f());
        let inside = |p: Point| p.x >= -EDGE_TOL && p.x <= w + EDGE_TOL && p.y >= -EDGE_TOL && p.y <= h + EDGE_TOL;
        for (i, b) in self.boundaries.iter().enumerate() {
            if !(b.floor.is_finite() && b.ceil.is_finite()) {
                out.push(Violation::NonFinite { index: i });
                continue;
            }
            if !(inside(b.floor) && inside(b.ceil)) {
                out.push(Violation::CornerOutsideImage { index: i });
            }
            if b.ceil.y >= b.floor.y {
                out.push(Violation::InvertedBoundary { index: i });
            }
            if (!self.has_floor && b.floor.y < h - EDGE_TOL) || (!self.has_ceiling && b.ceil.y > EDGE_TOL) {
                out.push(Violation::SurfaceFlagMismatch { index: i });
            }
        }
        if !out.is_empty() {
            return out;
        }
        for (i, pair) in self.boundaries.windows(2).enumerate() {
            let (l, r) = (&pair[0], &pair[1]);
            if r.floor.x <= l.floor.x {
                out.push(Violation::OrderingViolation { index: i + 1 });
                continue;
            }
            let crossing = r.ceil.x <= l.ceil.x
                || quad_edges_cross(l.floor, r.floor, l.ceil, r.ceil)
                || quad_edges_cross(l.floor, l.ceil, r.floor, r.ceil);
            if crossing {
                out.push(Violation::CrossingBoundaries { index: i + 1 });
            }
        }
        if (self.has_floor || self.has_ceiling) && self.boundaries.is_empty() {
            out.push(Violation::MissingCorners);
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidLayout(v))
        }
    }

    fn floor_corners(&self) -> impl Iterator<Item = Point> + '_ {
        self.boundaries.iter().map(|b| b.floor)
    }

    fn ceil_corners(&self) -> impl Iterator<Item = Point> + '_ {
        self.boundaries.iter().map(|b| b.ceil)
    }

    fn closed_polyline(&self, corners: Vec<Point>) -> Vec<Point> {
        let mut line = Vec::with_capacity(corners.len() + 2);
        if let (Some(first), Some(last)) = (corners.first().copied(), corners.last().copied()) {
            if first.x > EDGE_TOL {
                line.push(Point::new(0.0, first.y));
            }
            line.extend(corners);
            if last.x < self.width_f() - EDGE_TOL {
                line.push(Point::new(self.width_f(), last.y));
            }
        }
        line
    }

    /// Wall-floor polyline from the left image edge to the right one.
    pub fn floor_polyline(&self) -> Option<Vec<Point>> {
        self.has_floor
            .then(|| self.closed_polyline(self.floor_corners().collect()))
    }

    pub fn ceiling_polyline(&self) -> Option<Vec<Point>> {
        self.has_ceiling
            .then(|| self.closed_polyline(self.ceil_corners().collect()))
    }

    /// Wall-floor segments: one per consecutive corner pair plus the edge
    /// connections to the image sides.
    pub fn wf_segments(&self) -> Result<Vec<Segment>> {
        self.floor_polyline()
            .map(polyline_segments)
            .ok_or(Error::MissingSurface("floor"))
    }

    pub fn wc_segments(&self) -> Result<Vec<Segment>> {
        self.ceiling_polyline()
            .map(polyline_segments)
            .ok_or(Error::MissingSurface("ceiling"))
    }

    pub fn ww_segments(&self) -> Vec<Segment> {
        self.interior_boundaries().filter_map(|(_, b)| b.segment()).collect()
    }

    /// All segments of one boundary class; empty when the surface is absent.
    pub fn segments(&self, class: BoundaryClass) -> Vec<Segment> {
        match class {
            BoundaryClass::WallWall => self.ww_segments(),
            BoundaryClass::WallFloor => self.wf_segments().unwrap_or_default(),
            BoundaryClass::WallCeiling => self.wc_segments().unwrap_or_default(),
        }
    }

    pub fn all_segments(&self) -> Vec<Segment> {
        BoundaryClass::ALL.iter().flat_map(|&c| self.segments(c)).collect()
    }

    /// Wall separators left to right as (floor, ceiling) points, including
    /// the image sides when no edge boundary is present.
    fn separators(&self) -> Vec<(Point, Point)> {
        let (w, h) = (self.width_f(), self.height_f());
        let mut seps = Vec::with_capacity(self.boundaries.len() + 2);
        match (self.boundaries.first(), self.boundaries.last()) {
            (Some(first), Some(last)) => {
                if !self.is_left_edge(first) {
                    seps.push((Point::new(0.0, first.floor.y), Point::new(0.0, first.ceil.y)));
                }
                seps.extend(self.boundaries.iter().map(|b| (b.floor, b.ceil)));
                if !self.is_right_edge(last) {
                    seps.push((Point::new(w, last.floor.y), Point::new(w, last.ceil.y)));
                }
            }
            _ => {
                seps.push((Point::new(0.0, h), Point::new(0.0, 0.0)));
                seps.push((Point::new(w, h), Point::new(w, 0.0)));
            }
        }
        seps
    }

    pub fn floor_polygon(&self) -> Option<Vec<Point>> {
        let mut poly = self.floor_polyline()?;
        let (w, h) = (self.width_f(), self.height_f());
        poly.push(Point::new(w, h));
        poly.push(Point::new(0.0, h));
        Some(poly)
    }

    pub fn ceiling_polygon(&self) -> Option<Vec<Point>> {
        let line = self.ceiling_polyline()?;
        let mut poly = vec![Point::new(0.0, 0.0), Point::new(self.width_f(), 0.0)];
        poly.extend(line.into_iter().rev());
        Some(poly)
    }

    pub fn wall_polygons(&self) -> Vec<Vec<Point>> {
        self.separators()
            .windows(2)
            .map(|s| vec![s[0].0, s[1].0, s[1].1, s[0].1])
            .collect()
    }

    pub fn surface_masks(&self) -> Result<SurfaceMasks> {
        self.ensure_valid()?;
        let (w, h) = (self.image_width, self.image_height);
        let fill = |poly: Option<Vec<Point>>| {
            let mut m = PolygonMask::empty(w, h);
            if let Some(poly) = poly {
                fill_polygon(&poly, w, h, |x, y| m.set(x, y));
            }
            m
        };
        Ok(SurfaceMasks {
            floor: fill(self.floor_polygon()),
            ceiling: fill(self.ceiling_polygon()),
            walls: self.wall_polygons().into_iter().map(|p| fill(Some(p))).collect(),
        })
    }

    /// Per-pixel surface label (wall / floor / ceiling), row-major.
    pub fn label_map(&self) -> Result<Vec<u8>> {
        self.ensure_valid()?;
        let (w, h) = (self.image_width, self.image_height);
        let mut labels = vec![LABEL_WALL; w * h];
        if let Some(poly) = self.floor_polygon() {
            fill_polygon(&poly, w, h, |x, y| labels[y * w + x] = LABEL_FLOOR);
        }
        if let Some(poly) = self.ceiling_polygon() {
            fill_polygon(&poly, w, h, |x, y| labels[y * w + x] = LABEL_CEILING);
        }
        Ok(labels)
    }

    pub fn render_boundary_image(&self, stroke_px: usize) -> Result<BoundaryImage> {
        self.ensure_valid()?;
        let (w, h) = (self.image_width, self.image_height);
        let mut planes = Planes::zeros(3, w, h);
        for class in BoundaryClass::ALL {
            for seg in self.segments(class) {
                stroke_segment(&seg, stroke_px, w, h, |x, y| planes.set(class.channel(), x, y, 1.0));
            }
        }
        Ok(BoundaryImage(planes))
    }

    /// Interior joints (corners strictly inside the image), floor then ceiling.
    pub fn joints(&self) -> (Vec<Point>, Vec<Point>) {
        let (w, h) = (self.width_f(), self.height_f());
        let strictly_inside = |p: &Point| p.x > EDGE_TOL && p.x < w - EDGE_TOL && p.y > EDGE_TOL && p.y < h - EDGE_TOL;
        let floor = if self.has_floor {
            self.floor_corners().filter(strictly_inside).collect()
        } else {
            Vec::new()
        };
        let ceil = if self.has_ceiling {
            self.ceil_corners().filter(strictly_inside).collect()
        } else {
            Vec::new()
        };
        (floor, ceil)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("layout document: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json().as_bytes())
    }
}

fn quad_edges_cross(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    match (LineSegment::new(a0, a1), LineSegment::new(b0, b1)) {
        (Ok(s), Ok(t)) => segments_intersect(&s, &t),
        _ => false,
    }
}

fn polyline_segments(points: Vec<Point>) -> Vec<Segment> {
    points
        .windows(2)
        .filter_map(|p| LineSegment::new(p[0], p[1]).ok())
        .collect()
}
