//! Layout feature maps: corner map (wwf, wwc), boundary map (ww, wf, wc,
//! non-boundary), surface segmentation (wall, floor, ceiling) and the scalar
//! complexity level.
//!
//! Maps normally come from a feature network and are ingested through the
//! `RSNM` container. [`render_oracle`] produces them synthetically from a
//! ground-truth layout, with optional blur, additive noise and rectangular
//! occluders that wipe boundary and corner evidence (segmentation labels the
//! room as if it were empty, so it is never occluded).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::stroke_segment;
use crate::layout::{BoundaryClass, Layout, DEFAULT_STROKE_PX, EDGE_TOL};
use crate::raster::Planes;
use crate::Point;

pub const CORNER_CHANNELS: usize = 2;
pub const BOUNDARY_CHANNELS: usize = 4;
pub const SEG_CHANNELS: usize = 3;
/// Index of the non-boundary channel of the boundary map.
pub const NON_BOUNDARY: usize = 3;

const MAGIC: &[u8; 4] = b"RSNM";
const FORMAT_VERSION: u16 = 1;
const RANGE_TOL: f32 = 1e-4;
/// Ridge falloff never gets sharper than this, like a network's soft output.
const MIN_RIDGE_SIGMA: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps {
    pub width: usize,
    pub height: usize,
    pub corner: Planes,
    pub boundary: Planes,
    pub seg: Planes,
    pub complexity: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub blur_sigma: f64,
    pub additive_noise_sigma: f64,
    pub occlusion_boxes: usize,
    pub occlusion_max_frac: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 0.0,
            additive_noise_sigma: 0.0,
            occlusion_boxes: 0,
            occlusion_max_frac: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.blur_sigma >= 0.0
            && self.additive_noise_sigma >= 0.0
            && (0.0..=0.5).contains(&self.occlusion_max_frac)
            && self.blur_sigma.is_finite()
            && self.additive_noise_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("noise parameters out of range: {self:?}")))
        }
    }
}

/// Axis-aligned occluder, pixel bounds `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Occluder {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Occluder {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Occluders drawn for `noise` on a `width x height` image; deterministic in the seed.
pub fn occluders(noise: &NoiseConfig, width: usize, height: usize) -> Vec<Occluder> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ 0x6f63_636c_7564_6572);
    let area = (width * height) as f64;
    (0..noise.occlusion_boxes)
        .filter_map(|_| {
            if noise.occlusion_max_frac <= 0.0 {
                return None;
            }
            let frac = rng.random_range(0.25..=1.0) * noise.occlusion_max_frac;
            let aspect: f64 = rng.random_range(0.5..2.0);
            let bw = ((frac * area * aspect).sqrt().round() as usize).clamp(1, width);
            let bh = ((frac * area / bw as f64).round() as usize).clamp(1, height);
            let x0 = rng.random_range(0..=width - bw);
            let y0 = rng.random_range(0..=height - bh);
            Some(Occluder {
                x0,
                y0,
                x1: x0 + bw,
                y1: y0 + bh,
            })
        })
        .collect()
}

impl FeatureMaps {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            corner: Planes::zeros(CORNER_CHANNELS, width, height),
            boundary: Planes::zeros(BOUNDARY_CHANNELS, width, height),
            seg: Planes::zeros(SEG_CHANNELS, width, height),
            complexity: 0.0,
        }
    }

    /// Checks value ranges: confidences in [0, 1], segmentation sums to 1, C >= 0.
    pub fn validate(&self) -> Result<()> {
        let dims_ok = [&self.corner, &self.boundary, &self.seg]
            .iter()
            .all(|p| p.width == self.width && p.height == self.height)
            && self.corner.channels == CORNER_CHANNELS
            && self.boundary.channels == BOUNDARY_CHANNELS
            && self.seg.channels == SEG_CHANNELS;
        if !dims_ok {
            return Err(Error::Format("map planes disagree with declared shape".into()));
        }
        for (name, planes) in [
            ("corner", &self.corner),
            ("boundary", &self.boundary),
            ("seg", &self.seg),
        ] {
            if let Some(v) = planes
                .data
                .iter()
                .find(|v| !(**v >= -RANGE_TOL && **v <= 1.0 + RANGE_TOL))
            {
                return Err(Error::Range(format!("{name} map value {v} outside [0, 1]")));
            }
        }
        let n = self.width * self.height;
        for i in 0..n {
            let s: f32 = (0..SEG_CHANNELS).map(|c| self.seg.plane(c)[i]).sum();
            if (s - 1.0).abs() > RANGE_TOL {
                return Err(Error::Range(format!("segmentation sum {s} at pixel {i}")));
            }
        }
        if !(self.complexity >= 0.0 && self.complexity.is_finite()) {
            return Err(Error::Range(format!("complexity {} is negative", self.complexity)));
        }
        Ok(())
    }

    /// Argmax surface label per pixel (ties resolved toward the lower channel).
    pub fn seg_labels(&self) -> Vec<u8> {
        let n = self.width * self.height;
        (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..SEG_CHANNELS {
                    if self.seg.plane(c)[i] > self.seg.plane(best)[i] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let planes = self.width * self.height * (CORNER_CHANNELS + BOUNDARY_CHANNELS + SEG_CHANNELS);
        let mut out = Vec::with_capacity(24 + planes * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for (role, planes) in [(0u8, &self.corner), (1, &self.boundary), (2, &self.seg)] {
            out.push(role);
            out.push(planes.channels as u8);
            for v in &planes.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.complexity.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let mut slots: [Option<Planes>; 3] = [None, None, None];
        for _ in 0..3 {
            let role = r.take(1)?[0];
            let expected = match role {
                0 => CORNER_CHANNELS,
                1 => BOUNDARY_CHANNELS,
                2 => SEG_CHANNELS,
                other => return Err(Error::Format(format!("unknown role byte {other}"))),
            };
            let channels = r.take(1)?[0] as usize;
            if channels != expected {
                return Err(Error::Format(format!(
                    "role {role} declares {channels} channels, expected {expected}"
                )));
            }
            if slots[role as usize].is_some() {
                return Err(Error::Format(format!("duplicate role {role}")));
            }
            let count = channels
                .checked_mul(width)
                .and_then(|v| v.checked_mul(height))
                .ok_or_else(|| Error::Format("map dimensions overflow".into()))?;
            let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Format("overflow".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            slots[role as usize] = Some(Planes {
                channels,
                width,
                height,
                data,
            });
        }
        let complexity = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after complexity".into()));
        }
        let [corner, boundary, seg] = slots;
        let maps = FeatureMaps {
            width,
            height,
            corner: corner.unwrap(),
            boundary: boundary.unwrap(),
            seg: seg.unwrap(),
            complexity,
        };
        maps.validate()?;
        Ok(maps)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        crate::io::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated map file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Rounds the complexity scalar to a wall count, never below one.
pub fn predict_wall_count(complexity: f64) -> usize {
    if !complexity.is_finite() || complexity < 0.5 {
        return 1;
    }
    (complexity.round() as usize).max(1)
}

/// Synthetic stand-in for the feature network.
pub fn render_oracle(layout: &Layout, noise: &NoiseConfig) -> Result<FeatureMaps> {
    layout.ensure_valid()?;
    noise.validate()?;
    let (w, h) = (layout.image_width, layout.image_height);
    let mut maps = FeatureMaps::zeros(w, h);

    for class in BoundaryClass::ALL {
        let ch = class.channel();
        for seg in layout.segments(class) {
            stroke_segment(&seg, DEFAULT_STROKE_PX, w, h, |x, y| maps.boundary.set(ch, x, y, 1.0));
            let half = DEFAULT_STROKE_PX as f64 / 2.0;
            let sigma = noise.blur_sigma.max(MIN_RIDGE_SIGMA);
            let reach = half + 4.0 * sigma;
            for_pixels_near(&[seg.a, seg.b], reach, w, h, |x, y, q| {
                let d = (seg.distance_to_point(q) - half).max(0.0);
                let v = (-d * d / (2.0 * sigma * sigma)).exp() as f32;
                let i = maps.boundary.index(ch, x, y);
                maps.boundary.data[i] = maps.boundary.data[i].max(v);
            });
        }
    }
    fill_non_boundary(&mut maps.boundary);

    let sigma = noise.blur_sigma.max(2.0);
    let (floors, ceils) = visible_corners(layout);
    for (ch, corners) in [(0, floors), (1, ceils)] {
        for c in corners {
            for_pixels_near(&[c], 4.0 * sigma, w, h, |x, y, q| {
                let d2 = (q - c).dot(q - c);
                let v = (-d2 / (2.0 * sigma * sigma)).exp() as f32;
                let i = maps.corner.index(ch, x, y);
                maps.corner.data[i] = maps.corner.data[i].max(v);
            });
        }
    }

    for (i, &label) in layout.label_map()?.iter().enumerate() {
        maps.seg.plane_mut(label as usize)[i] = 1.0;
    }
    maps.complexity = layout.n_walls() as f32;

    if noise.additive_noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let normal = Normal::new(0.0f32, noise.additive_noise_sigma as f32)
            .map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
        for v in maps.boundary.data.iter_mut().chain(maps.corner.data.iter_mut()) {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    for occ in occluders(noise, w, h) {
        for y in occ.y0..occ.y1 {
            for x in occ.x0..occ.x1 {
                for c in 0..BOUNDARY_CHANNELS {
                    maps.boundary.set(c, x, y, 0.0);
                }
                for c in 0..CORNER_CHANNELS {
                    maps.corner.set(c, x, y, 0.0);
                }
            }
        }
    }
    Ok(maps)
}

/// Recomputes the non-boundary channel as `1 - max(ww, wf, wc)`.
pub fn fill_non_boundary(boundary: &mut Planes) {
    let n = boundary.width * boundary.height;
    for i in 0..n {
        let m = (0..NON_BOUNDARY).map(|c| boundary.plane(c)[i]).fold(0.0f32, f32::max);
        boundary.plane_mut(NON_BOUNDARY)[i] = 1.0 - m;
    }
}

/// Visible joints of the layout: (wwf, wwc).
pub fn visible_corners(layout: &Layout) -> (Vec<Point>, Vec<Point>) {
    let (w, h) = (layout.width_f(), layout.height_f());
    let inside = |p: Point| p.x > EDGE_TOL && p.x < w - EDGE_TOL && p.y > EDGE_TOL && p.y < h - EDGE_TOL;
    let mut floors = Vec::new();
    let mut ceils = Vec::new();
    for b in &layout.boundaries {
        if layout.has_floor && b.floor_visible && inside(b.floor) {
            floors.push(b.floor);
        }
        if layout.has_ceiling && b.ceil_visible && inside(b.ceil) {
            ceils.push(b.ceil);
        }
    }
    (floors, ceils)
}

/// Visits pixels whose centers lie in the bounding box of `pts` grown by `reach`.
fn for_pixels_near(pts: &[Point], reach: f64, w: usize, h: usize, mut f: impl FnMut(usize, usize, Point)) {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
    let (cx0, cx1) = (clamp((x0 - reach).floor(), w), clamp((x1 + reach).ceil(), w));
    let (cy0, cy1) = (clamp((y0 - reach).floor(), h), clamp((y1 + reach).ceil(), h));
    for y in cy0..cy1 {
        for x in cx0..cx1 {
            f(x, y, Point::new(x as f64 + 0.5, y as f64 + 0.5));
        }
    }
}
