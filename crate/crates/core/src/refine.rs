//! Visual-cue alignment: straight edges found in the photo pull candidate
//! boundaries onto them, and every aligned variant becomes a candidate.

use std::collections::HashSet;

use image::{imageops, GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::binary::BinaryImage;
use crate::error::{Error, Result};
use crate::featuremaps::{FeatureMaps, NON_BOUNDARY};
use crate::geometry::{fit_segment, intersect, LineSegment};
use crate::layout::{Layout, EDGE_TOL};
use crate::proposal::{compare_layouts, parabola_offset, Candidate, CandidateSet, Provenance};
use crate::{Point, Segment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CueSource {
    Photo,
    /// Ridges of the boundary map, used when no photo is available.
    BoundaryMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub enabled: bool,
    pub align_angle_deg: f64,
    pub align_distance_px: f64,
    pub min_cue_len_px: f64,
    /// Sobel magnitude threshold, in 8-bit intensity units.
    pub gradient_threshold: f64,
    pub chain_tolerance_px: f64,
    /// Aligned variants whose corners all lie this close to an existing
    /// candidate's are dropped as duplicates.
    pub duplicate_tolerance_px: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            align_angle_deg: 10.0,
            align_distance_px: 15.0,
            min_cue_len_px: 20.0,
            gradient_threshold: 40.0,
            chain_tolerance_px: 1.5,
            duplicate_tolerance_px: 1.0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.align_angle_deg > 0.0
            && self.align_angle_deg < 90.0
            && self.align_distance_px > 0.0
            && self.min_cue_len_px >= 2.0
            && self.gradient_threshold > 0.0
            && self.chain_tolerance_px > 0.0
            && self.duplicate_tolerance_px >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("refine thresholds out of range: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CueSet {
    pub source_id: String,
    pub source: CueSource,
    pub segments: Vec<Segment>,
}

/// Largest angle between a pixel's gradient and its region's mean gradient.
const LINK_ANGLE_DEG: f64 = 20.0;
/// Gaussian pre-smoothing so staircase edges keep a steady gradient direction.
const SMOOTHING_SIGMA: f32 = 1.0;

/// Chains are cut where consecutive samples are farther apart than this.
const CHAIN_GAP_PX: f64 = 3.0;

/// Straight edges of a grayscale photo.
pub fn extract_cues(image: &GrayImage, cfg: &RefineConfig) -> Result<CueSet> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyInput);
    }
    let raw: Vec<f32> = image.as_raw().iter().map(|&v| v as f32).collect();
    let buf = ImageBuffer::<Luma<f32>, _>::from_raw(w as u32, h as u32, raw).expect("matching size");
    let data = imageops::blur(&buf, SMOOTHING_SIGMA).into_raw();
    Ok(CueSet {
        source_id: String::new(),
        source: CueSource::Photo,
        segments: edge_segments(&data, w, h, cfg),
    })
}

fn edge_segments(data: &[f32], w: usize, h: usize, cfg: &RefineConfig) -> Vec<Segment> {
    if w < 3 || h < 3 {
        return Vec::new();
    }
    let px = |x: usize, y: usize| data[y * w + x];
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    let mut mag = vec![0.0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let sx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let sy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            let i = y * w + x;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = sx.hypot(sy);
        }
    }
    // thinning: keep maxima along the quantized gradient direction
    let mut pos = vec![None::<Point>; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if (m as f64) < cfg.gradient_threshold {
                continue;
            }
            let angle = (gy[i] as f64).atan2(gx[i] as f64).rem_euclid(std::f64::consts::PI);
            let bin = ((angle / std::f64::consts::FRAC_PI_4).round() as usize) % 4;
            let (dx, dy): (i64, i64) = [(1, 0), (1, 1), (0, 1), (-1, 1)][bin];
            let at = |s: i64| mag[((y as i64 + s * dy) as usize) * w + (x as i64 + s * dx) as usize];
            let (prev, next) = (at(-1), at(1));
            if m > prev && m >= next {
                let t = parabola_offset(prev, m, next);
                pos[i] = Some(Point::new(
                    x as f64 + 0.5 + t * dx as f64,
                    y as f64 + 0.5 + t * dy as f64,
                ));
            }
        }
    }
    // grow line-support regions from the strongest pixels: a pixel joins when
    // its gradient direction is close to the region's mean direction
    let unit = |i: usize| {
        let m = (mag[i] as f64).max(f64::MIN_POSITIVE);
        Point::new(gx[i] as f64 / m, gy[i] as f64 / m)
    };
    let cos_tol = LINK_ANGLE_DEG.to_radians().cos();
    let mut seeds: Vec<usize> = (0..w * h).filter(|&i| pos[i].is_some()).collect();
    seeds.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
    let mut used = vec![false; w * h];
    let mut out = Vec::new();
    for start in seeds {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut sum = unit(start);
        let mut queue = std::collections::VecDeque::from([start]);
        let mut region = Vec::new();
        while let Some(i) = queue.pop_front() {
            region.push(pos[i].unwrap());
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if used[j] || pos[j].is_none() {
                        continue;
                    }
                    let u = unit(j);
                    if u.dot(sum) >= cos_tol * sum.norm() {
                        used[j] = true;
                        sum = sum + u;
                        queue.push_back(j);
                    }
                }
            }
        }
        split_fit(&region, cfg.chain_tolerance_px, cfg.min_cue_len_px, &mut out);
    }
    out
}

/// Cues from boundary-map ridges (maximum over the three boundary channels
/// is thresholded per channel so crossings do not merge classes).
pub fn extract_cues_from_maps(maps: &FeatureMaps, cfg: &RefineConfig) -> CueSet {
    let (w, h) = (maps.width, maps.height);
    let mut segments = Vec::new();
    for c in 0..NON_BOUNDARY {
        let plane = maps.boundary.plane(c);
        let mask = BinaryImage::from_fn(w, h, |x, y| plane[y * w + x] >= 0.5);
        for comp in mask.components() {
            let pts: Vec<Point> = comp
                .iter()
                .map(|&(x, y)| Point::new(x as f64 + 0.5, y as f64 + 0.5))
                .collect();
            split_fit(&pts, cfg.chain_tolerance_px, cfg.min_cue_len_px, &mut segments);
        }
    }
    CueSet {
        source_id: String::new(),
        source: CueSource::BoundaryMap,
        segments,
    }
}

/// Collapses a point cloud to a centerline along its principal direction,
/// splits it at gaps and bends, and fits one segment per straight piece.
fn split_fit(points: &[Point], tol: f64, min_len: f64, out: &mut Vec<Segment>) {
    let Ok(axis) = fit_segment(points) else {
        return;
    };
    if axis.length() < min_len {
        return;
    }
    let dir = axis.unit_direction();
    let mut bins: std::collections::BTreeMap<i64, (Point, f64)> = Default::default();
    for &p in points {
        let t = (p - axis.a).dot(dir).round() as i64;
        let e = bins.entry(t).or_insert((Point::new(0.0, 0.0), 0.0));
        e.0 = e.0 + p;
        e.1 += 1.0;
    }
    let line: Vec<(i64, Point)> = bins.into_iter().map(|(t, (s, n))| (t, s * (1.0 / n))).collect();
    let mut start = 0;
    for i in 1..=line.len() {
        if i == line.len() || (line[i].0 - line[i - 1].0) as f64 > CHAIN_GAP_PX {
            let piece: Vec<Point> = line[start..i].iter().map(|p| p.1).collect();
            douglas_peucker(&piece, tol, min_len, out);
            start = i;
        }
    }
}

fn douglas_peucker(pts: &[Point], tol: f64, min_len: f64, out: &mut Vec<Segment>) {
    if pts.len() < 2 {
        return;
    }
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    if first.dist(last) < min_len {
        return;
    }
    let chord = LineSegment::new(first, last).expect("distinct endpoints");
    let (split, worst) = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, chord.distance_to_line(p)))
        .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
    if worst > tol && split > 0 && split + 1 < pts.len() {
        douglas_peucker(&pts[..=split], tol, min_len, out);
        douglas_peucker(&pts[split..], tol, min_len, out);
    } else if let Ok(seg) = fit_segment(pts) {
        if seg.length() >= min_len {
            out.push(seg);
        }
    }
}

/// A boundary of a layout addressed for alignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Ww(usize),
    /// Wall-floor piece between boundaries `j` and `j + 1`.
    Wf(usize),
    Wc(usize),
}

fn target_segments(layout: &Layout) -> Vec<(Target, Segment)> {
    let mut out = Vec::new();
    for (i, b) in layout.interior_boundaries() {
        if let Some(s) = b.segment() {
            out.push((Target::Ww(i), s));
        }
    }
    let (w, h) = (layout.width_f(), layout.height_f());
    let on_border = |a: Point, b: Point| {
        (a.y >= h - EDGE_TOL && b.y >= h - EDGE_TOL)
            || (a.y <= EDGE_TOL && b.y <= EDGE_TOL)
            || (a.x <= EDGE_TOL && b.x <= EDGE_TOL)
            || (a.x >= w - EDGE_TOL && b.x >= w - EDGE_TOL)
    };
    for (j, pair) in layout.boundaries.windows(2).enumerate() {
        let pieces = [
            (layout.has_floor, Target::Wf(j), pair[0].floor, pair[1].floor),
            (layout.has_ceiling, Target::Wc(j), pair[0].ceil, pair[1].ceil),
        ];
        for (present, target, a, b) in pieces {
            if present && !on_border(a, b) {
                if let Ok(s) = LineSegment::new(a, b) {
                    out.push((target, s));
                }
            }
        }
    }
    out
}

/// Nearest matching cue: orientation within the angle tolerance, boundary
/// midpoint within the distance tolerance of the cue line, and overlapping
/// extents. Ties go to the longer cue.
fn best_cue(seg: &Segment, cues: &[Segment], cfg: &RefineConfig) -> Option<Segment> {
    let tol = cfg.align_angle_deg.to_radians();
    let mid = seg.midpoint();
    cues.iter()
        .filter(|c| c.angle_between(seg) <= tol)
        .filter(|c| {
            let (ta, tb) = (seg.project(c.a), seg.project(c.b));
            ta.max(tb) >= 0.0 && ta.min(tb) <= 1.0
        })
        .map(|c| (c.distance_to_line(mid), c))
        .filter(|(d, _)| *d <= cfg.align_distance_px)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.length().total_cmp(&a.1.length())))
        .map(|(_, c)| *c)
}

/// Aligned variants of `layout`: one per single matched boundary, then one
/// with every match applied. Invalid variants are dropped.
pub fn align_layout(layout: &Layout, cues: &CueSet, cfg: &RefineConfig) -> Vec<Candidate> {
    if !layout.is_valid() {
        return Vec::new();
    }
    let matches: Vec<(Target, Segment)> = target_segments(layout)
        .into_iter()
        .filter_map(|(t, s)| best_cue(&s, &cues.segments, cfg).map(|c| (t, c)))
        .collect();
    let mut out: Vec<Candidate> = Vec::new();
    let mut seen = HashSet::new();
    let mut emit = |l: Option<Layout>, provenance| {
        if let Some(l) = l {
            if seen.insert(crate::proposal::layout_key(&l)) {
                out.push(Candidate { provenance, layout: l });
            }
        }
    };
    for m in &matches {
        emit(
            apply(layout, std::slice::from_ref(m), cfg),
            Provenance::AlignedIntermediate,
        );
    }
    if !matches.is_empty() {
        emit(apply(layout, &matches, cfg), Provenance::AlignedFinal);
    }
    out
}

fn apply(layout: &Layout, aligned: &[(Target, Segment)], cfg: &RefineConfig) -> Option<Layout> {
    let m = layout.boundaries.len();
    let (w, h) = (layout.width_f(), layout.height_f());
    let line_of = |t: Target| aligned.iter().find(|(a, _)| *a == t).map(|(_, s)| *s);
    let mut out = layout.clone();
    for i in 0..m {
        let b = layout.boundaries[i];
        let ww_new = line_of(Target::Ww(i));
        let ww = ww_new.or_else(|| b.segment());
        for floor in [true, false] {
            let present = if floor { layout.has_floor } else { layout.has_ceiling };
            let cur = if floor { b.floor } else { b.ceil };
            let piece = |j: usize| if floor { Target::Wf(j) } else { Target::Wc(j) };
            let current = |j: usize| {
                let (a, c) = if floor {
                    (layout.boundaries[j].floor, layout.boundaries[j + 1].floor)
                } else {
                    (layout.boundaries[j].ceil, layout.boundaries[j + 1].ceil)
                };
                LineSegment::new(a, c).ok()
            };
            let adjacent: Vec<usize> = [i.checked_sub(1), (i + 1 < m).then_some(i)]
                .into_iter()
                .flatten()
                .collect();
            let aligned_adj: Vec<Segment> = adjacent.iter().filter_map(|&j| line_of(piece(j))).collect();
            if ww_new.is_none() && aligned_adj.is_empty() {
                continue;
            }
            let side = border_side(cur, w, h);
            let new = if layout.is_left_edge(&b) || layout.is_right_edge(&b) {
                let x = cur.x;
                let edge = LineSegment::new(Point::new(x, 0.0), Point::new(x, h)).ok()?;
                if !present || side == Some(if floor { Side::Bottom } else { Side::Top }) {
                    cur
                } else {
                    mean(aligned_adj.iter().filter_map(|l| intersect(&edge, l)))?
                }
            } else if let Some(side) = side {
                if ww_new.is_none() {
                    cur
                } else {
                    intersect(&ww?, &side.line(w, h))?
                }
            } else {
                let ww = ww?;
                let lines: Vec<Segment> = if aligned_adj.is_empty() {
                    let cur_adj: Vec<Segment> = adjacent.iter().filter_map(|&j| current(j)).collect();
                    if cur_adj.is_empty() {
                        vec![LineSegment::new(cur, cur + Point::new(1.0, 0.0)).ok()?]
                    } else {
                        cur_adj
                    }
                } else {
                    aligned_adj
                };
                mean(lines.iter().filter_map(|l| intersect(&ww, l)))?
            };
            if new.dist(cur) > 2.0 * cfg.align_distance_px {
                return None;
            }
            let new = Point::new(snap_into(new.x, w)?, snap_into(new.y, h)?);
            if floor {
                out.boundaries[i].floor = new;
            } else {
                out.boundaries[i].ceil = new;
            }
        }
    }
    out.is_valid().then_some(out)
}

/// Clamps coordinates that overshoot the image by rounding noise only.
fn snap_into(v: f64, hi: f64) -> Option<f64> {
    if v < -1e-6 || v > hi + 1e-6 {
        None
    } else {
        Some(v.clamp(0.0, hi))
    }
}

fn mean(points: impl Iterator<Item = Point>) -> Option<Point> {
    let (sum, n) = points.fold((Point::new(0.0, 0.0), 0.0), |(s, n), p| (s + p, n + 1.0));
    (n > 0.0).then(|| sum * (1.0 / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

impl Side {
    fn line(self, w: f64, h: f64) -> Segment {
        let (a, b) = match self {
            Side::Top => (Point::new(0.0, 0.0), Point::new(w, 0.0)),
            Side::Bottom => (Point::new(0.0, h), Point::new(w, h)),
            Side::Left => (Point::new(0.0, 0.0), Point::new(0.0, h)),
            Side::Right => (Point::new(w, 0.0), Point::new(w, h)),
        };
        LineSegment { a, b }
    }
}

fn border_side(p: Point, w: f64, h: f64) -> Option<Side> {
    if p.y >= h - EDGE_TOL {
        Some(Side::Bottom)
    } else if p.y <= EDGE_TOL {
        Some(Side::Top)
    } else if p.x <= EDGE_TOL {
        Some(Side::Left)
    } else if p.x >= w - EDGE_TOL {
        Some(Side::Right)
    } else {
        None
    }
}

/// True when the layouts share flags and boundary count and every corner
/// of one lies within `tol` of the matching corner of the other.
pub fn near_duplicate(a: &Layout, b: &Layout, tol: f64) -> bool {
    a.has_floor == b.has_floor
        && a.has_ceiling == b.has_ceiling
        && a.boundaries.len() == b.boundaries.len()
        && a.boundaries
            .iter()
            .zip(&b.boundaries)
            .all(|(p, q)| p.floor.dist(q.floor) <= tol && p.ceil.dist(q.ceil) <= tol)
}

/// Appends aligned variants of every candidate, dropping near duplicates of
/// candidates already present. The originals keep their order; additions
/// are sorted by provenance, then corners.
pub fn refine_candidates(set: &CandidateSet, cues: &CueSet, cfg: &RefineConfig) -> CandidateSet {
    let mut added: Vec<Candidate> = set
        .candidates
        .iter()
        .flat_map(|c| align_layout(&c.layout, cues, cfg))
        .collect();
    added.sort_by(|a, b| {
        a.provenance
            .cmp(&b.provenance)
            .then_with(|| compare_layouts(&a.layout, &b.layout))
    });
    let mut candidates = set.candidates.clone();
    for a in added {
        let dup = candidates
            .iter()
            .any(|c| near_duplicate(&c.layout, &a.layout, cfg.duplicate_tolerance_px));
        if !dup {
            candidates.push(a);
        }
    }
    CandidateSet {
        image_id: set.image_id.clone(),
        cue_source: Some(cues.source),
        candidates,
    }
}
