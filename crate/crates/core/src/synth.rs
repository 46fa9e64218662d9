//! Random generic layouts and matching grayscale "photos".
//!
//! Wall-wall lines all pass through a sampled vertical vanishing point far
//! above or below the image, so scenes are perspective-consistent without a
//! full camera model. Photos paint each surface a flat shade (adjacent walls
//! always differ) with 4x4 supersampling, optional furniture boxes and a
//! little sensor noise.

use std::path::Path;

use image::{GrayImage, Luma};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::featuremaps::Occluder;
use crate::geometry::{fill_polygon, LineSegment};
use crate::layout::{Layout, WwBoundary};
use crate::{Point, Segment};

/// Surface configuration of a layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SurfaceConfig {
    pub ceiling: bool,
    pub floor: bool,
}

impl SurfaceConfig {
    /// `{c,w,f}`, `{c,w}`, `{w,f}`, `{w}`.
    pub const ALL: [SurfaceConfig; 4] = [
        SurfaceConfig {
            ceiling: true,
            floor: true,
        },
        SurfaceConfig {
            ceiling: true,
            floor: false,
        },
        SurfaceConfig {
            ceiling: false,
            floor: true,
        },
        SurfaceConfig {
            ceiling: false,
            floor: false,
        },
    ];
}

#[derive(Clone, Copy, Debug)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    /// Minimum horizontal gap between wall-wall boundaries.
    pub min_wall_px: f64,
    /// Minimum distance between a visible corner and the image border.
    pub border_px: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            min_wall_px: 12.0,
            border_px: 6.0,
        }
    }
}

/// Samples a surface configuration: mostly full rooms, the rest split evenly.
pub fn sample_config<R: Rng>(rng: &mut R) -> SurfaceConfig {
    match rng.random_range(0..20) {
        0..=11 => SurfaceConfig::ALL[0],
        12..=14 => SurfaceConfig::ALL[1],
        15..=17 => SurfaceConfig::ALL[2],
        _ => SurfaceConfig::ALL[3],
    }
}

/// Samples a valid layout with exactly `n_walls` walls.
pub fn random_layout<R: Rng>(
    rng: &mut R,
    params: &SceneParams,
    n_walls: usize,
    config: SurfaceConfig,
) -> Result<Layout> {
    if n_walls == 0 {
        return Err(Error::DegenerateInput("a layout has at least one wall"));
    }
    let (w, h) = (params.width as f64, params.height as f64);
    let needed = (n_walls as f64 + 1.0) * params.min_wall_px;
    if needed > w {
        return Err(Error::Config(format!(
            "{n_walls} walls do not fit in a {}-pixel wide image",
            params.width
        )));
    }
    for _ in 0..1000 {
        let layout = try_layout(rng, params, n_walls, config, w, h);
        if let Some(l) = layout.filter(|l| l.is_valid() && l.n_walls() == n_walls) {
            return Ok(l);
        }
    }
    Err(Error::DegenerateInput("could not sample a valid layout"))
}

fn try_layout<R: Rng>(
    rng: &mut R,
    params: &SceneParams,
    n_walls: usize,
    config: SurfaceConfig,
    w: f64,
    h: f64,
) -> Option<Layout> {
    let above = rng.random_bool(0.5);
    // keeps every wall-wall line within 5 degrees of vertical
    let dist = rng.random_range(8.0..20.0) * h;
    let vp = Point::new(rng.random_range(0.35..0.65) * w, if above { -dist } else { h + dist });
    let margin = params.border_px + params.min_wall_px * 0.5;
    // sorted positions with guaranteed gaps: uniform slack plus fixed spacing
    let k = n_walls - 1;
    let slack = (w - 2.0 * margin) - k.saturating_sub(1) as f64 * params.min_wall_px;
    if slack <= 0.0 {
        return None;
    }
    let mut xs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..slack)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (i, x) in xs.iter_mut().enumerate() {
        *x += margin + i as f64 * params.min_wall_px;
    }
    let (floor_lo, floor_hi) = (0.62 * h, 0.92 * h);
    let (ceil_lo, ceil_hi) = (0.08 * h, 0.36 * h);
    let mut boundaries = Vec::with_capacity(n_walls + 1);
    let on_line = |line: &Segment, y: f64| Point::new(line.x_at_y(y).unwrap(), y);
    let corner_pair = |rng: &mut R, line: &Segment| {
        let floor = if config.floor {
            on_line(line, rng.random_range(floor_lo..floor_hi))
        } else {
            on_line(line, h)
        };
        let ceil = if config.ceiling {
            on_line(line, rng.random_range(ceil_lo..ceil_hi))
        } else {
            on_line(line, 0.0)
        };
        WwBoundary {
            floor,
            ceil,
            floor_visible: config.floor,
            ceil_visible: config.ceiling,
        }
    };
    let with_edges = config.floor || config.ceiling;
    let edge = |rng: &mut R, x: f64| WwBoundary {
        floor: Point::new(
            x,
            if config.floor {
                rng.random_range(floor_lo..floor_hi)
            } else {
                h
            },
        ),
        ceil: Point::new(
            x,
            if config.ceiling {
                rng.random_range(ceil_lo..ceil_hi)
            } else {
                0.0
            },
        ),
        floor_visible: false,
        ceil_visible: false,
    };
    if with_edges {
        boundaries.push(edge(rng, 0.0));
    }
    for &x in &xs {
        let line = LineSegment::new(vp, Point::new(x, h * 0.5)).ok()?;
        let b = corner_pair(rng, &line);
        let inside = |p: Point| p.x >= params.border_px && p.x <= w - params.border_px;
        if !(inside(b.floor) && inside(b.ceil)) {
            return None;
        }
        boundaries.push(b);
    }
    if with_edges {
        boundaries.push(edge(rng, w));
    }
    // keep boundaries apart at both ends so walls stay resolvable
    let gaps_ok = boundaries
        .windows(2)
        .all(|p| p[1].floor.x - p[0].floor.x >= params.min_wall_px && p[1].ceil.x - p[0].ceil.x >= params.min_wall_px);
    if !gaps_ok {
        return None;
    }
    Some(Layout::new(params.width, params.height, config.ceiling, config.floor).with_boundaries(boundaries))
}

pub const FLOOR_SHADE: f64 = 60.0;
pub const CEILING_SHADE: f64 = 215.0;
const WALL_SHADES: [f64; 5] = [120.0, 160.0, 100.0, 180.0, 140.0];
const FURNITURE_SHADE: f64 = 85.0;
const SUPERSAMPLE: usize = 4;

/// Renders a grayscale photo of the empty room, then paints `furniture` boxes.
pub fn render_photo(
    layout: &Layout,
    furniture: &[Occluder],
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Result<GrayImage> {
    layout.ensure_valid()?;
    let s = SUPERSAMPLE;
    let (w, h) = (layout.image_width, layout.image_height);
    let scaled = scale_layout(layout, s as f64);
    let (sw, sh) = (w * s, h * s);
    let mut shade = vec![0.0f64; sw * sh];
    for (k, poly) in scaled.wall_polygons().iter().enumerate() {
        let v = WALL_SHADES[k % WALL_SHADES.len()];
        fill_polygon(poly, sw, sh, |x, y| shade[y * sw + x] = v);
    }
    if let Some(poly) = scaled.floor_polygon() {
        fill_polygon(&poly, sw, sh, |x, y| shade[y * sw + x] = FLOOR_SHADE);
    }
    if let Some(poly) = scaled.ceiling_polygon() {
        fill_polygon(&poly, sw, sh, |x, y| shade[y * sw + x] = CEILING_SHADE);
    }
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).map_err(|e| Error::Config(format!("photo noise: {e}")))?;
    let mut img = GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let furnished = furniture.iter().any(|o| o.contains(x, y));
            let mut v = if furnished {
                FURNITURE_SHADE
            } else {
                let mut acc = 0.0;
                for dy in 0..s {
                    for dx in 0..s {
                        acc += shade[(y * s + dy) * sw + x * s + dx];
                    }
                }
                acc / (s * s) as f64
            };
            if noise_sigma > 0.0 {
                v += normal.sample(rng);
            }
            img.put_pixel(x as u32, y as u32, Luma([v.round().clamp(0.0, 255.0) as u8]));
        }
    }
    Ok(img)
}

/// Same layout in an image `factor` times larger.
pub fn scale_layout(layout: &Layout, factor: f64) -> Layout {
    let mut out = layout.clone();
    out.image_width = (layout.image_width as f64 * factor).round() as usize;
    out.image_height = (layout.image_height as f64 * factor).round() as usize;
    for b in &mut out.boundaries {
        b.floor = b.floor * factor;
        b.ceil = b.ceil * factor;
    }
    out
}

pub fn save_photo(img: &GrayImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    crate::io::write_atomic(path, &bytes)
}

pub fn load_photo(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(img.to_luma8())
}
