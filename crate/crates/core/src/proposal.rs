//! Candidate layout generation from feature maps.
//!
//! Wall-wall lines come from two sources: thresholded ridges of the boundary
//! map and corner pairs that agree with the vertical vanishing point. The
//! merged lines are combined in every subset allowed by the complexity cap;
//! each line is cut by the floor and ceiling outlines of the segmentation.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binary::BinaryImage;
use crate::error::{Error, Result};
use crate::featuremaps::FeatureMaps;
use crate::geometry::{angle_to, fit_segment, intersect, LineSegment};
use crate::layout::{Layout, WwBoundary, EDGE_TOL, LABEL_CEILING, LABEL_FLOOR};
use crate::refine::CueSource;
use crate::synth::SurfaceConfig;
use crate::{Point, Segment};

/// Subset enumerations larger than this are refused outright.
pub const ENUMERATION_LIMIT: usize = 250_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    pub boundary_threshold: f64,
    pub corner_threshold: f64,
    pub nms_radius_px: f64,
    pub vp_angle_deg: f64,
    /// Fraction of `min(width, height)`.
    pub edge_snap_frac: f64,
    pub min_component_px: f64,
    pub max_candidates: usize,
    pub near_vertical_deg: f64,
    pub ransac_iterations: usize,
    pub ransac_seed: u64,
    pub dedup_distance_px: f64,
    pub dedup_angle_deg: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            boundary_threshold: 0.5,
            corner_threshold: 0.3,
            nms_radius_px: 8.0,
            vp_angle_deg: 5.0,
            edge_snap_frac: 0.02,
            min_component_px: 12.0,
            max_candidates: 2000,
            near_vertical_deg: 30.0,
            ransac_iterations: 200,
            ransac_seed: 0,
            dedup_distance_px: 3.0,
            dedup_angle_deg: 2.0,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let angle = |v: f64| v > 0.0 && v < 90.0;
        let ok = unit(self.boundary_threshold)
            && unit(self.corner_threshold)
            && self.nms_radius_px >= 0.0
            && angle(self.vp_angle_deg)
            && angle(self.near_vertical_deg)
            && (0.0..0.5).contains(&self.edge_snap_frac)
            && self.min_component_px >= 0.0
            && self.max_candidates >= 4
            && self.ransac_iterations >= 1
            && self.dedup_distance_px >= 0.0
            && self.dedup_angle_deg >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("proposal thresholds out of range: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VanishingPoint {
    /// Meaningless when `valid` is false.
    pub location: Point,
    pub support: usize,
    pub valid: bool,
}

impl VanishingPoint {
    pub fn invalid() -> Self {
        Self {
            location: Point::new(0.0, 0.0),
            support: 0,
            valid: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Initialized,
    AlignedIntermediate,
    AlignedFinal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub provenance: Provenance,
    pub layout: Layout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSet {
    pub image_id: String,
    /// Where alignment cues came from, if alignment ran.
    pub cue_source: Option<CueSource>,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn layouts(&self) -> impl Iterator<Item = &Layout> {
        self.candidates.iter().map(|c| &c.layout)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("candidate set: {e}")))
    }
}

/// Wall-wall segments from the thresholded ridges of boundary channel 0.
pub fn detect_ww_from_boundary(maps: &FeatureMaps, cfg: &ProposalConfig) -> Vec<Segment> {
    let (w, h) = (maps.width, maps.height);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let ridge = maps.boundary.plane(0);
    let tau = cfg.boundary_threshold as f32;
    let mask = BinaryImage::from_fn(w, h, |x, y| ridge[y * w + x] >= tau)
        .close()
        .open_vertical();
    mask.components()
        .into_iter()
        .filter_map(|comp| {
            let pts: Vec<Point> = comp
                .iter()
                .map(|&(x, y)| Point::new(x as f64 + 0.5, y as f64 + 0.5))
                .collect();
            fit_segment(&pts).ok()
        })
        .filter(|s| s.length() >= cfg.min_component_px)
        .collect()
}

/// 5x5 local maxima per corner channel, thresholded, suppressed and
/// refined to subpixel accuracy. Returns (wwf, wwc).
pub fn detect_corners(maps: &FeatureMaps, cfg: &ProposalConfig) -> (Vec<Point>, Vec<Point>) {
    let mut out = [Vec::new(), Vec::new()];
    for (ch, dst) in out.iter_mut().enumerate() {
        *dst = channel_peaks(maps.corner.plane(ch), maps.width, maps.height, cfg);
    }
    let [floor, ceil] = out;
    (floor, ceil)
}

fn channel_peaks(plane: &[f32], w: usize, h: usize, cfg: &ProposalConfig) -> Vec<Point> {
    let at = |x: usize, y: usize| plane[y * w + x];
    let mut peaks: Vec<(f32, usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = at(x, y);
            if (v as f64) < cfg.corner_threshold {
                continue;
            }
            // maximum of the 5x5 window; on a plateau only the first pixel in
            // raster order counts, and a flat window has no maximum at all
            let mut peak = true;
            let mut below = false;
            for yy in y.saturating_sub(2)..(y + 3).min(h) {
                for xx in x.saturating_sub(2)..(x + 3).min(w) {
                    if (xx, yy) == (x, y) {
                        continue;
                    }
                    let u = at(xx, yy);
                    let earlier = (yy, xx) < (y, x);
                    if u > v || (earlier && u == v) {
                        peak = false;
                    }
                    below |= u < v;
                }
            }
            if peak && below {
                peaks.push((v, x, y));
            }
        }
    }
    // stable sort keeps raster order among equal confidences
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut kept: Vec<Point> = Vec::new();
    for (_, x, y) in peaks {
        let centre = Point::new(x as f64 + 0.5, y as f64 + 0.5);
        if kept.iter().any(|k| k.dist(centre) <= cfg.nms_radius_px) {
            continue;
        }
        kept.push(centre);
    }
    kept.into_iter()
        .map(|p| {
            let (x, y) = (p.x as usize, p.y as usize);
            let dx = if x > 0 && x + 1 < w {
                parabola_offset(at(x - 1, y), at(x, y), at(x + 1, y))
            } else {
                0.0
            };
            let dy = if y > 0 && y + 1 < h {
                parabola_offset(at(x, y - 1), at(x, y), at(x, y + 1))
            } else {
                0.0
            };
            Point::new(p.x + dx, p.y + dy)
        })
        .collect()
}

/// Vertex offset of the parabola through three equally spaced samples.
pub(crate) fn parabola_offset(l: f32, c: f32, r: f32) -> f64 {
    let (l, c, r) = (l as f64, c as f64, r as f64);
    let denom = l - 2.0 * c + r;
    if denom.abs() < 1e-12 {
        0.0
    } else {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    }
}

fn deviation_from_vertical(seg: &Segment) -> f64 {
    let d = seg.direction();
    d.x.abs().atan2(d.y.abs())
}

/// RANSAC estimate of the point where near-vertical segments meet.
pub fn estimate_vertical_vp(segments: &[Segment], cfg: &ProposalConfig) -> VanishingPoint {
    let limit = cfg.near_vertical_deg.to_radians();
    let tol = cfg.vp_angle_deg.to_radians();
    let near: Vec<Segment> = segments
        .iter()
        .copied()
        .filter(|s| deviation_from_vertical(s) <= limit)
        .collect();
    if near.len() < 2 {
        return VanishingPoint::invalid();
    }
    let n = near.len();
    let all_pairs = n * (n - 1) / 2;
    let pairs: Vec<(usize, usize)> = if all_pairs <= cfg.ransac_iterations {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.ransac_seed);
        (0..cfg.ransac_iterations)
            .map(|_| {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                (i.min(j), i.max(j))
            })
            .collect()
    };
    // (inlier count, angle sum, point)
    let mut best: Option<(usize, f64, Point)> = None;
    for (i, j) in pairs {
        let Some(p) = intersect(&near[i], &near[j]) else {
            continue;
        };
        if near.iter().any(|s| s.distance_to_point(p) < 1.0) {
            // a vertical vanishing point cannot lie on a boundary itself
            continue;
        }
        let angles: Vec<f64> = near.iter().map(|s| angle_to(s, p)).filter(|&a| a <= tol).collect();
        let (count, sum) = (angles.len(), angles.iter().sum::<f64>());
        let better = match best {
            None => true,
            Some((bc, bs, _)) => count > bc || (count == bc && sum < bs),
        };
        if better {
            best = Some((count, sum, p));
        }
    }
    let Some((_, _, hyp)) = best else {
        return VanishingPoint::invalid();
    };
    let inliers: Vec<&Segment> = near.iter().filter(|s| angle_to(s, hyp) <= tol).collect();
    let location = least_squares_point(&inliers).unwrap_or(hyp);
    let support = near.iter().filter(|s| angle_to(s, location) <= tol).count();
    VanishingPoint {
        location,
        support,
        valid: support >= 2 && location.is_finite(),
    }
}

/// Point minimizing the summed squared distance to the lines through `segs`.
fn least_squares_point(segs: &[&Segment]) -> Option<Point> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in segs {
        let d = s.unit_direction();
        let nrm = Point::new(-d.y, d.x);
        let c = nrm.dot(s.a);
        a11 += nrm.x * nrm.x;
        a12 += nrm.x * nrm.y;
        a22 += nrm.y * nrm.y;
        b1 += nrm.x * c;
        b2 += nrm.y * c;
    }
    let det = a11 * a22 - a12 * a12;
    let trace = a11 + a22;
    if det.abs() <= 1e-12 * trace * trace {
        return None;
    }
    let p = Point::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
    p.is_finite().then_some(p)
}

/// Floor/ceiling corner pairs whose connecting line agrees with the vanishing
/// point (or with the vertical direction when it is invalid).
pub fn pair_corners(wwf: &[Point], wwc: &[Point], vp: &VanishingPoint, cfg: &ProposalConfig) -> Vec<Segment> {
    let tol = cfg.vp_angle_deg.to_radians();
    let mut out = Vec::new();
    for &f in wwf {
        for &c in wwc {
            if c.y >= f.y {
                continue;
            }
            let Ok(seg) = LineSegment::new(f, c) else {
                continue;
            };
            let deviation = if vp.valid {
                angle_to(&seg, vp.location)
            } else {
                deviation_from_vertical(&seg)
            };
            if deviation <= tol {
                out.push(seg);
            }
        }
    }
    dedupe_segments(out, cfg)
}

/// Keeps the longest of every group of nearly coincident segments: two
/// segments coincide when their orientations differ by at most the angle
/// tolerance and each midpoint lies within the distance tolerance of the
/// other's line.
pub fn dedupe_segments(mut segs: Vec<Segment>, cfg: &ProposalConfig) -> Vec<Segment> {
    segs.sort_by(|a, b| {
        b.length()
            .total_cmp(&a.length())
            .then(a.a.x.total_cmp(&b.a.x))
            .then(a.a.y.total_cmp(&b.a.y))
    });
    let tol = cfg.dedup_angle_deg.to_radians();
    let mut kept: Vec<Segment> = Vec::new();
    for s in segs {
        let dup = kept.iter().any(|k| {
            k.angle_between(&s) <= tol
                && k.distance_to_line(s.midpoint()) <= cfg.dedup_distance_px
                && s.distance_to_line(k.midpoint()) <= cfg.dedup_distance_px
        });
        if !dup {
            kept.push(s);
        }
    }
    kept
}

/// Full proposal stage: detection, pairing and initialization.
pub fn propose(image_id: &str, maps: &FeatureMaps, cap: usize, cfg: &ProposalConfig) -> Result<CandidateSet> {
    let mut ww = detect_ww_from_boundary(maps, cfg);
    let (wwf, wwc) = detect_corners(maps, cfg);
    let vp = estimate_vertical_vp(&ww, cfg);
    ww.extend(pair_corners(&wwf, &wwc, &vp, cfg));
    let mut set = initialize_layouts(&ww, maps, cap, cfg)?;
    set.image_id = image_id.to_string();
    Ok(set)
}

/// Floor and ceiling outlines of argmax segmentation, one height per column:
/// the floor outline sits above the floor pixels of a column, the ceiling
/// outline below its ceiling pixels.
struct Outlines {
    floor: Vec<f64>,
    ceil: Vec<f64>,
    any_floor: bool,
    any_ceiling: bool,
}

impl Outlines {
    fn from_maps(maps: &FeatureMaps) -> Self {
        let (w, h) = (maps.width, maps.height);
        let labels = maps.seg_labels();
        let mut floor = vec![h as f64; w];
        let mut ceil = vec![0.0; w];
        for y in 0..h {
            for x in 0..w {
                match labels[y * w + x] {
                    LABEL_FLOOR => floor[x] -= 1.0,
                    LABEL_CEILING => ceil[x] += 1.0,
                    _ => {}
                }
            }
        }
        Self {
            any_floor: floor.iter().any(|&v| v < h as f64),
            any_ceiling: ceil.iter().any(|&v| v > 0.0),
            floor,
            ceil,
        }
    }
}

/// Piecewise-linear height through column centers, clamped at the ends.
fn profile_at(profile: &[f64], x: f64) -> f64 {
    let t = x - 0.5;
    if t <= 0.0 {
        return profile[0];
    }
    let last = profile.len() - 1;
    if t >= last as f64 {
        return profile[last];
    }
    let i = t.floor() as usize;
    let f = t - i as f64;
    profile[i] * (1.0 - f) + profile[i + 1] * f
}

/// A candidate line with its crossings of the segmentation outlines.
struct Line {
    seg: Segment,
    floor: (Point, bool),
    ceil: (Point, bool),
    top: Point,
    bottom: Point,
    score: f64,
}

struct Geometry {
    w: f64,
    h: f64,
    snap: f64,
}

impl Geometry {
    /// Where the infinite line meets the horizontal `y`, kept inside the image.
    fn junction(&self, seg: &Segment, y: f64) -> Point {
        let x = seg.x_at_y(y).unwrap_or(seg.midpoint().x);
        if x < 0.0 {
            Point::new(0.0, seg.y_at_x(0.0).unwrap_or(y).clamp(0.0, self.h))
        } else if x > self.w {
            Point::new(self.w, seg.y_at_x(self.w).unwrap_or(y).clamp(0.0, self.h))
        } else {
            Point::new(x, y)
        }
    }

    /// Snaps a crossing close to an image side onto the line/side junction;
    /// the flag reports whether the corner stayed visible.
    fn snap(&self, seg: &Segment, p: Point) -> (Point, bool) {
        if p.y >= self.h - self.snap {
            (self.junction(seg, self.h), false)
        } else if p.y <= self.snap {
            (self.junction(seg, 0.0), false)
        } else if p.x <= self.snap {
            (
                Point::new(0.0, seg.y_at_x(0.0).unwrap_or(p.y).clamp(0.0, self.h)),
                false,
            )
        } else if p.x >= self.w - self.snap {
            (
                Point::new(self.w, seg.y_at_x(self.w).unwrap_or(p.y).clamp(0.0, self.h)),
                false,
            )
        } else {
            (p, true)
        }
    }
}

/// Columns used on each side of a crossing when refining it.
const FIT_WINDOW_PX: f64 = 40.0;
/// Columns this close to a candidate line are skipped by the fits.
const FIT_GAP_PX: f64 = 2.0;

/// First crossing of the line with the outline, scanning downward.
fn coarse_crossing(seg: &Segment, profile: &[f64], geo: &Geometry) -> Point {
    let x_of = |y: f64| seg.x_at_y(y).unwrap_or(seg.midpoint().x).clamp(0.0, geo.w);
    let g = |y: f64| y - profile_at(profile, x_of(y));
    let steps = (geo.h * 4.0).ceil() as usize;
    let mut lo = 0.0;
    let mut hi = geo.h;
    for i in 1..=steps {
        let y = geo.h * i as f64 / steps as f64;
        if g(y) >= 0.0 {
            hi = y;
            lo = geo.h * (i - 1) as f64 / steps as f64;
            break;
        }
    }
    if g(lo) >= 0.0 {
        return Point::new(x_of(lo), lo);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let y = 0.5 * (lo + hi);
    Point::new(x_of(y), y)
}

/// Ordinary least squares `y = a + b x` through the profile over `[x0, x1]`,
/// skipping saturated columns (no outline in that column).
fn fit_profile(profile: &[f64], x0: f64, x1: f64, h: f64) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = (0..profile.len())
        .map(|c| (c as f64 + 0.5, profile[c]))
        .filter(|&(x, y)| x >= x0 && x <= x1 && y > 0.0 && y < h)
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx < 1e-9 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

fn refine_crossing(seg: &Segment, profile: &[f64], others: &[f64], coarse: Point, geo: &Geometry) -> Point {
    let left_limit = others
        .iter()
        .copied()
        .filter(|&x| x < coarse.x - 1e-9)
        .fold(f64::NEG_INFINITY, f64::max);
    let right_limit = others
        .iter()
        .copied()
        .filter(|&x| x > coarse.x + 1e-9)
        .fold(f64::INFINITY, f64::min);
    let windows = [
        (
            (coarse.x - FIT_WINDOW_PX).max(left_limit + FIT_GAP_PX),
            coarse.x - FIT_GAP_PX,
        ),
        (
            coarse.x + FIT_GAP_PX,
            (coarse.x + FIT_WINDOW_PX).min(right_limit - FIT_GAP_PX),
        ),
    ];
    let mut acc = Point::new(0.0, 0.0);
    let mut n = 0.0;
    for (x0, x1) in windows {
        let Some((a, b)) = fit_profile(profile, x0, x1, geo.h) else {
            continue;
        };
        let far = Point::new(coarse.x + 100.0, a + b * (coarse.x + 100.0));
        let Ok(outline) = LineSegment::new(Point::new(coarse.x, a + b * coarse.x), far) else {
            continue;
        };
        if let Some(p) = intersect(seg, &outline) {
            if p.dist(coarse) <= 4.0 {
                acc = acc + p;
                n += 1.0;
            }
        }
    }
    if n > 0.0 {
        acc * (1.0 / n)
    } else {
        coarse
    }
}

/// Outline height at an image side, fitted up to the nearest candidate.
fn edge_height(profile: &[f64], lines: &[Line], left: bool, geo: &Geometry) -> f64 {
    let y_guess = profile_at(profile, if left { 0.0 } else { geo.w });
    let xs = lines
        .iter()
        .map(|l| l.seg.x_at_y(y_guess).unwrap_or(l.seg.midpoint().x));
    let y = if left {
        let limit = xs.fold(geo.w, f64::min);
        fit_profile(profile, 0.0, limit - FIT_GAP_PX, geo.h).map(|(a, _)| a)
    } else {
        let limit = xs.fold(0.0, f64::max);
        fit_profile(profile, limit + FIT_GAP_PX, geo.w, geo.h).map(|(a, b)| a + b * geo.w)
    };
    y.unwrap_or(y_guess).clamp(0.0, geo.h)
}

fn mean_ridge(maps: &FeatureMaps, seg: &Segment) -> f64 {
    let n = seg.length().ceil().max(1.0) as usize;
    let sum: f64 = (0..=n)
        .map(|i| {
            let p = seg.point_at(i as f64 / n as f64);
            maps.boundary.sample(0, p.x, p.y) as f64
        })
        .sum();
    sum / (n + 1) as f64
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Layouts from subsets of the wall-wall candidates under the complexity cap.
pub fn initialize_layouts(
    ww_candidates: &[Segment],
    maps: &FeatureMaps,
    cap: usize,
    cfg: &ProposalConfig,
) -> Result<CandidateSet> {
    if cap == 0 {
        return Err(Error::Config("complexity cap must be at least 1".into()));
    }
    if maps.width == 0 || maps.height == 0 {
        return Err(Error::DegenerateInput("empty feature maps"));
    }
    let (w, h) = (maps.width as f64, maps.height as f64);
    let geo = Geometry {
        w,
        h,
        snap: cfg.edge_snap_frac * w.min(h),
    };
    let limit = cfg.near_vertical_deg.to_radians();
    let mut segs: Vec<Segment> = dedupe_segments(ww_candidates.to_vec(), cfg)
        .into_iter()
        .filter(|s| deviation_from_vertical(s) <= limit)
        .filter(|s| s.x_at_y(h * 0.5).is_some_and(|x| x > 0.0 && x < w))
        .collect();
    segs.sort_by(|a, b| a.x_at_y(h * 0.5).unwrap().total_cmp(&b.x_at_y(h * 0.5).unwrap()));

    let outlines = Outlines::from_maps(maps);
    let mut lines: Vec<Line> = segs
        .iter()
        .map(|s| Line {
            seg: *s,
            floor: (Point::new(0.0, 0.0), false),
            ceil: (Point::new(0.0, 0.0), false),
            top: geo.junction(s, 0.0),
            bottom: geo.junction(s, h),
            score: mean_ridge(maps, s),
        })
        .collect();
    for i in 0..lines.len() {
        for (profile, is_floor) in [(&outlines.floor, true), (&outlines.ceil, false)] {
            let seg = lines[i].seg;
            let coarse = coarse_crossing(&seg, profile, &geo);
            let others: Vec<f64> = lines
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .filter_map(|(_, l)| l.seg.x_at_y(coarse.y))
                .collect();
            let p = refine_crossing(&seg, profile, &others, coarse, &geo);
            let snapped = geo.snap(&seg, p);
            if is_floor {
                lines[i].floor = snapped;
            } else {
                lines[i].ceil = snapped;
            }
        }
    }
    let snap_y = |y: f64, target: f64| if (y - target).abs() <= geo.snap { target } else { y };
    let edges = [true, false].map(|left| {
        (
            snap_y(edge_height(&outlines.floor, &lines, left, &geo), h),
            snap_y(edge_height(&outlines.ceil, &lines, left, &geo), 0.0),
        )
    });

    let configs: Vec<SurfaceConfig> = SurfaceConfig::ALL
        .into_iter()
        .filter(|c| (!c.floor || outlines.any_floor) && (!c.ceiling || outlines.any_ceiling))
        .collect();
    let n = lines.len();
    let total: usize = (0..cap).map(|k| binomial(n, k)).fold(0, usize::saturating_add);
    if total > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded(total));
    }
    let mut subsets: Vec<(f64, Vec<usize>)> = Vec::with_capacity(total);
    for k in 0..cap.min(n + 1) {
        for_each_subset(n, k, |idx| {
            let score = if idx.is_empty() {
                1.0
            } else {
                idx.iter().map(|&i| lines[i].score).sum::<f64>() / idx.len() as f64
            };
            subsets.push((score, idx.to_vec()));
        });
    }
    subsets.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    subsets.truncate((cfg.max_candidates / configs.len().max(1)).max(1));

    let mut seen = HashSet::new();
    let mut scored: Vec<(f64, Layout)> = Vec::new();
    for (score, idx) in &subsets {
        for config in &configs {
            let layout = assemble(&lines, idx, *config, edges, &geo, maps);
            if layout.is_valid() && seen.insert(layout_key(&layout)) {
                scored.push((*score, layout));
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| compare_layouts(&a.1, &b.1)));
    Ok(CandidateSet {
        image_id: String::new(),
        cue_source: None,
        candidates: scored
            .into_iter()
            .map(|(_, layout)| Candidate {
                provenance: Provenance::Initialized,
                layout,
            })
            .collect(),
    })
}

fn assemble(
    lines: &[Line],
    idx: &[usize],
    config: SurfaceConfig,
    edges: [(f64, f64); 2],
    geo: &Geometry,
    maps: &FeatureMaps,
) -> Layout {
    let mut boundaries: Vec<WwBoundary> = idx
        .iter()
        .map(|&i| {
            let l = &lines[i];
            let (floor, floor_visible) = if config.floor { l.floor } else { (l.bottom, false) };
            let (ceil, ceil_visible) = if config.ceiling { l.ceil } else { (l.top, false) };
            WwBoundary {
                floor,
                ceil,
                floor_visible,
                ceil_visible,
            }
        })
        .collect();
    if config.floor || config.ceiling {
        let edge = |x: f64, (fy, cy): (f64, f64)| WwBoundary {
            floor: Point::new(x, if config.floor { fy } else { geo.h }),
            ceil: Point::new(x, if config.ceiling { cy } else { 0.0 }),
            floor_visible: false,
            ceil_visible: false,
        };
        let touches = |b: &WwBoundary, x: f64| (b.floor.x - x).abs() <= EDGE_TOL || (b.ceil.x - x).abs() <= EDGE_TOL;
        if !boundaries.first().is_some_and(|b| touches(b, 0.0)) {
            boundaries.insert(0, edge(0.0, edges[0]));
        }
        if !boundaries.last().is_some_and(|b| touches(b, geo.w)) {
            boundaries.push(edge(geo.w, edges[1]));
        }
    }
    Layout::new(maps.width, maps.height, config.ceiling, config.floor).with_boundaries(boundaries)
}

pub(crate) fn layout_key(l: &Layout) -> (bool, bool, Vec<i64>) {
    let q = |v: f64| (v * 1e6).round() as i64;
    let coords = l
        .boundaries
        .iter()
        .flat_map(|b| [q(b.floor.x), q(b.floor.y), q(b.ceil.x), q(b.ceil.y)])
        .collect();
    (l.has_ceiling, l.has_floor, coords)
}

/// Deterministic total order: flags, then corners lexicographically.
pub fn compare_layouts(a: &Layout, b: &Layout) -> std::cmp::Ordering {
    let flat = |l: &Layout| -> Vec<f64> {
        l.boundaries
            .iter()
            .flat_map(|b| [b.floor.x, b.floor.y, b.ceil.x, b.ceil.y])
            .collect()
    };
    (b.has_ceiling, b.has_floor)
        .cmp(&(a.has_ceiling, a.has_floor))
        .then_with(|| {
            let (fa, fb) = (flat(a), flat(b));
            fa.iter()
                .zip(&fb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(fa.len().cmp(&fb.len()))
        })
}
