//! Layout metrics: pixel label error, corner error, top-k tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::pipeline::{infer_scene, PipelineConfig, Scene};
use crate::scoring::ScorerParams;
use crate::Point;

/// Fraction of pixels whose surface label differs between the layouts.
pub fn e_pixel(l: &Layout, gt: &Layout) -> Result<f64> {
    if (l.image_width, l.image_height) != (gt.image_width, gt.image_height) {
        return Err(Error::DimensionMismatch(
            l.image_width,
            l.image_height,
            gt.image_width,
            gt.image_height,
        ));
    }
    let (a, b) = (l.label_map()?, gt.label_map()?);
    let diff = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

/// Minimum total cost of matching every row of the smaller side, with the
/// matched pairs. Exact dynamic program over subsets of the smaller side.
pub fn min_cost_matching(a: &[Point], b: &[Point]) -> (f64, Vec<(usize, usize)>) {
    let swap = a.len() > b.len();
    let (small, large) = if swap { (b, a) } else { (a, b) };
    let m = small.len();
    if m == 0 {
        return (0.0, Vec::new());
    }
    assert!(m <= 20, "too many joints for exact matching");
    let full = 1usize << m;
    // dp over processed prefix of `large`; choice[j][mask] records the small
    // index matched to large[j] (or none)
    let mut dp = vec![f64::INFINITY; full];
    dp[0] = 0.0;
    let mut choice: Vec<Vec<Option<usize>>> = Vec::with_capacity(large.len());
    for q in large {
        let mut next = dp.clone();
        let mut pick = vec![None; full];
        for mask in 0..full {
            if !dp[mask].is_finite() {
                continue;
            }
            for (i, p) in small.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let nm = mask | (1 << i);
                let c = dp[mask] + p.dist(*q);
                if c < next[nm] {
                    next[nm] = c;
                    pick[nm] = Some(i);
                }
            }
        }
        dp = next;
        choice.push(pick);
    }
    let mut pairs = Vec::with_capacity(m);
    let mut mask = full - 1;
    for j in (0..large.len()).rev() {
        if let Some(i) = choice[j][mask] {
            pairs.push(if swap { (j, i) } else { (i, j) });
            mask &= !(1 << i);
        }
    }
    pairs.reverse();
    (dp[full - 1], pairs)
}

fn distance_to_boundary(p: Point, l: &Layout) -> Option<f64> {
    l.all_segments()
        .iter()
        .map(|s| s.distance_to_point(p))
        .min_by(|a, b| a.total_cmp(b))
}

/// Mean joint displacement over the image diagonal. Joints are matched per
/// type at minimum total distance; unmatched joints contribute their
/// distance to the other layout's boundaries (the full diagonal when it has
/// none).
pub fn e_corner(l: &Layout, gt: &Layout) -> Result<f64> {
    if (l.image_width, l.image_height) != (gt.image_width, gt.image_height) {
        return Err(Error::DimensionMismatch(
            l.image_width,
            l.image_height,
            gt.image_width,
            gt.image_height,
        ));
    }
    let diag = gt.diagonal();
    let (lf, lc) = l.joints();
    let (gf, gc) = gt.joints();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in [(lf, gf), (lc, gc)] {
        let (cost, pairs) = min_cost_matching(&a, &b);
        sum += cost;
        count += pairs.len();
        let matched_a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let matched_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        for (pts, used, other) in [(&a, &matched_a, gt), (&b, &matched_b, l)] {
            for (i, p) in pts.iter().enumerate() {
                if !used.contains(&i) {
                    sum += distance_to_boundary(*p, other).unwrap_or(diag);
                    count += 1;
                }
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 / diag })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKStat {
    /// Mean error of the k best-ranked candidates.
    #[default]
    Mean,
    /// Lowest error among the k best-ranked candidates.
    Best,
}

/// For each k, the mean over images of the top-k statistic. Each inner list
/// holds one image's candidate errors in rank order; pools shorter than k
/// use what they have.
pub fn topk_table(ranked: &[Vec<f64>], ks: &[usize], stat: TopKStat) -> Result<BTreeMap<usize, f64>> {
    if ranked.is_empty() || ranked.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let mut out = BTreeMap::new();
    for &k in ks {
        if k == 0 {
            return Err(Error::Config("top-k needs k >= 1".into()));
        }
        let per_image = ranked.iter().map(|errs| {
            let top = &errs[..k.min(errs.len())];
            match stat {
                TopKStat::Mean => top.iter().sum::<f64>() / top.len() as f64,
                TopKStat::Best => top.iter().copied().fold(f64::INFINITY, f64::min),
            }
        });
        out.insert(k, per_image.sum::<f64>() / ranked.len() as f64);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    pub e_pixel: f64,
    pub e_corner: f64,
    /// 1-based rank of the candidate closest to the ground truth, when the
    /// ranked candidates are known.
    pub rank_of_gt: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub e_pixel: f64,
    pub e_corner: f64,
    pub per_image: Vec<ImageMetrics>,
    pub top_k: BTreeMap<usize, f64>,
}

impl MetricReport {
    pub fn from_images(per_image: Vec<ImageMetrics>, top_k: BTreeMap<usize, f64>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = per_image.len() as f64;
        Ok(Self {
            e_pixel: per_image.iter().map(|m| m.e_pixel).sum::<f64>() / n,
            e_corner: per_image.iter().map(|m| m.e_corner).sum::<f64>() / n,
            per_image,
            top_k,
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for m in &self.per_image {
            w.serialize(m).map_err(|e| Error::Format(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "images    {}", self.per_image.len()).unwrap();
        writeln!(s, "e_pixel   {:.2}%", 100.0 * self.e_pixel).unwrap();
        writeln!(s, "e_corner  {:.2}%", 100.0 * self.e_corner).unwrap();
        if !self.top_k.is_empty() {
            writeln!(s, "top-k     e_pixel").unwrap();
            for (k, v) in &self.top_k {
                writeln!(s, "  top {k:<4}{:.2}%", 100.0 * v).unwrap();
            }
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// Mean (e_pixel, e_corner) of the full pipeline with the wall count capped
/// at each value of `caps`.
pub fn complexity_sweep(
    scenes: &[Scene],
    caps: &[usize],
    cfg: &PipelineConfig,
    params: &ScorerParams,
) -> Result<BTreeMap<usize, (f64, f64)>> {
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = BTreeMap::new();
    for &cap in caps {
        let errs = scenes
            .par_iter()
            .map(|s| {
                let ranked = infer_scene(&s.image_id, &s.maps, s.photo.as_ref(), cfg, params, Some(cap))?;
                Ok((e_pixel(ranked.best(), &s.gt)?, e_corner(ranked.best(), &s.gt)?))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let n = errs.len() as f64;
        let mean = |f: fn(&(f64, f64)) -> f64| errs.iter().map(f).sum::<f64>() / n;
        out.insert(cap, (mean(|e| e.0), mean(|e| e.1)));
    }
    Ok(out)
}
