//! Layout margins, joint layout/map features, a linear scorer and its
//! max-margin (or regression) training.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featuremaps::{predict_wall_count, FeatureMaps, NON_BOUNDARY};
use crate::layout::{BoundaryClass, Layout, LABEL_CEILING, LABEL_FLOOR, LABEL_WALL};
use crate::proposal::CandidateSet;
use crate::refine::CueSet;
use crate::{Point, Segment};

/// Samples per boundary class in the line margin.
pub const LINE_SAMPLES: usize = 64;
/// Version tag of the joint feature extractor.
pub const FEATURE_VERSION: &str = "joint-v1";
pub const FEATURE_DIM: usize = 17;
/// Boundary samples within this distance of a cue count as supported.
pub const CUE_SUPPORT_PX: f64 = 1.5;
/// Boundary-map mass below this marks an occluded pixel.
const OCCLUDED_MASS: f32 = 0.05;

const PARAMS_HEADER: &str = "roomlayout-scorer";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginBreakdown {
    pub d_line: f64,
    pub d_area: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Sum of hinge violations over candidates.
    StructureSum,
    /// Largest hinge violation only.
    StructureMax,
    /// Squared error against the negated margin.
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub floor_only_area: bool,
    /// Weight decay on the feature weights (not the bias).
    pub l2_reg: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::StructureSum,
            learning_rate: 0.05,
            epochs: 40,
            batch_size: 8,
            seed: 0,
            floor_only_area: true,
            l2_reg: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::Config(format!(
                "l2_reg must be non-negative, got {}",
                self.l2_reg
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ScorerParams {
    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{PARAMS_HEADER} {FEATURE_VERSION}\ndim {}\nweights", self.weights.len());
        for w in &self.weights {
            write!(s, " {w:?}").unwrap();
        }
        writeln!(s, "\nbias {:?}", self.bias).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("scorer params: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        if header.first() != Some(&PARAMS_HEADER) {
            return Err(bad("missing header"));
        }
        if header.get(1) != Some(&FEATURE_VERSION) {
            return Err(bad(&format!(
                "feature version {:?} does not match {FEATURE_VERSION}",
                header.get(1).unwrap_or(&"")
            )));
        }
        let mut field = |name: &str| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected {name}")));
            }
            parts
                .map(|p| p.parse::<f64>().map_err(|e| bad(&format!("{name}: {e}"))))
                .collect()
        };
        let dim = field("dim")?;
        let weights = field("weights")?;
        let bias = field("bias")?;
        if dim.len() != 1 || dim[0] != FEATURE_DIM as f64 || weights.len() != FEATURE_DIM || bias.len() != 1 {
            return Err(bad("dimension mismatch"));
        }
        let params = Self { weights, bias: bias[0] };
        if !params.weights.iter().chain([&params.bias]).all(|v| v.is_finite()) {
            return Err(bad("non-finite entry"));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn same_dims(a: &Layout, b: &Layout) -> Result<()> {
    if (a.image_width, a.image_height) != (b.image_width, b.image_height) {
        return Err(Error::DimensionMismatch(
            a.image_width,
            a.image_height,
            b.image_width,
            b.image_height,
        ));
    }
    Ok(())
}

/// `k` points spread uniformly by arc length over the segments, each with
/// the unit direction of its segment.
pub fn sample_segments(segs: &[Segment], k: usize) -> Vec<(Point, Point)> {
    let total: f64 = segs.iter().map(|s| s.length()).sum();
    if segs.is_empty() || total <= 0.0 || k == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(k);
    let mut seg = 0;
    let mut start = 0.0;
    for i in 0..k {
        let target = (i as f64 + 0.5) / k as f64 * total;
        while seg + 1 < segs.len() && start + segs[seg].length() < target {
            start += segs[seg].length();
            seg += 1;
        }
        let s = &segs[seg];
        let t = ((target - start) / s.length()).clamp(0.0, 1.0);
        out.push((s.point_at(t), s.unit_direction()));
    }
    out
}

/// Mean distance from each sample of `a` to its nearest sample in `b`, and
/// mean `1 - |cos|` of the orientation difference over the same pairs.
fn directed(a: &[(Point, Point)], b: &[(Point, Point)]) -> (f64, f64) {
    let (mut dist, mut ang) = (0.0, 0.0);
    for (p, u) in a {
        let (d, v) = b
            .iter()
            .map(|(q, v)| (p.dist(*q), *v))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap();
        dist += d;
        ang += 1.0 - u.dot(v).abs().min(1.0);
    }
    let n = a.len() as f64;
    (dist / n, ang / n)
}

/// Line margin: per boundary class, squared symmetric chamfer distance of
/// the samples over the image diagonal plus the mean orientation penalty.
/// A class present in only one layout contributes 2.
pub fn d_line(l: &Layout, gt: &Layout) -> Result<f64> {
    same_dims(l, gt)?;
    let diag = gt.diagonal();
    let mut total = 0.0;
    for class in BoundaryClass::ALL {
        let a = sample_segments(&l.segments(class), LINE_SAMPLES);
        let b = sample_segments(&gt.segments(class), LINE_SAMPLES);
        total += match (a.is_empty(), b.is_empty()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => 2.0,
            (false, false) => {
                let (dab, aab) = directed(&a, &b);
                let (dba, aba) = directed(&b, &a);
                let chamfer = 0.5 * (dab + dba) / diag;
                chamfer * chamfer + 0.5 * (aab + aba)
            }
        };
    }
    Ok(total)
}

fn class_counts(labels: &[u8], class: u8) -> usize {
    labels.iter().filter(|&&v| v == class).count()
}

/// Area margin `2 - coverage - IoU` summed over the floor class, or over
/// floor, walls and ceiling.
pub fn d_area(l: &Layout, gt: &Layout, floor_only: bool) -> Result<f64> {
    same_dims(l, gt)?;
    let (la, lb) = (l.label_map()?, gt.label_map()?);
    let classes: &[u8] = if floor_only {
        &[LABEL_FLOOR]
    } else {
        &[LABEL_FLOOR, LABEL_WALL, LABEL_CEILING]
    };
    let mut total = 0.0;
    for &c in classes {
        let pred = class_counts(&la, c);
        let truth = class_counts(&lb, c);
        let inter = la.iter().zip(&lb).filter(|(a, b)| **a == c && **b == c).count();
        total += match (pred, truth) {
            (0, 0) => 0.0,
            (_, 0) | (0, _) => 2.0,
            _ => {
                let union = pred + truth - inter;
                2.0 - inter as f64 / truth as f64 - inter as f64 / union as f64
            }
        };
    }
    Ok(total)
}

pub fn margin(l: &Layout, gt: &Layout, floor_only: bool) -> Result<MarginBreakdown> {
    let d_line = d_line(l, gt)?;
    let d_area = d_area(l, gt, floor_only)?;
    Ok(MarginBreakdown {
        d_line,
        d_area,
        total: d_line + d_area,
    })
}

fn stroke_samples(segs: &[Segment]) -> Vec<Point> {
    segs.iter()
        .flat_map(|s| {
            let n = s.length().ceil().max(1.0) as usize;
            (0..=n).map(move |i| s.point_at(i as f64 / n as f64))
        })
        .collect()
}

fn mean(vals: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = vals.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Joint features of a layout against the maps (and cues, when available).
///
/// Order: boundary confidence along ww, wf, wc strokes; non-boundary
/// confidence along all strokes; corner confidence at wwf, wwc joints; soft
/// Dice agreement of the floor, wall and ceiling masks with segmentation;
/// wall-count deviation from the complexity; occluded stroke fraction; floor,
/// wall and ceiling area fractions; boundary length over image perimeter;
/// constant 1; fraction of stroke samples lying on a cue.
pub fn joint_features(l: &Layout, maps: &FeatureMaps, cues: Option<&CueSet>) -> Result<Vec<f64>> {
    if (l.image_width, l.image_height) != (maps.width, maps.height) {
        return Err(Error::DimensionMismatch(
            l.image_width,
            l.image_height,
            maps.width,
            maps.height,
        ));
    }
    let labels = l.label_map()?;
    let mut f = Vec::with_capacity(FEATURE_DIM);
    let mut all = Vec::new();
    for class in BoundaryClass::ALL {
        let pts = stroke_samples(&l.segments(class));
        f.push(mean(
            pts.iter()
                .map(|p| maps.boundary.sample(class.channel(), p.x, p.y) as f64),
        ));
        all.extend(pts);
    }
    f.push(mean(
        all.iter().map(|p| maps.boundary.sample(NON_BOUNDARY, p.x, p.y) as f64),
    ));
    let (floors, ceils) = l.joints();
    for (ch, joints) in [(0, floors), (1, ceils)] {
        f.push(mean(joints.iter().map(|p| maps.corner.sample(ch, p.x, p.y) as f64)));
    }
    for class in [LABEL_FLOOR, LABEL_WALL, LABEL_CEILING] {
        let prob = maps.seg.plane(class as usize);
        let inside: f64 = labels
            .iter()
            .zip(prob)
            .filter(|(v, _)| **v == class)
            .map(|(_, p)| *p as f64)
            .sum();
        let mass: f64 = prob.iter().map(|&p| p as f64).sum();
        let count = class_counts(&labels, class) as f64;
        f.push(if count + mass > 0.0 {
            2.0 * inside / (count + mass)
        } else {
            1.0
        });
    }
    f.push((l.n_walls() as f64 - predict_wall_count(maps.complexity as f64) as f64).abs());
    f.push(mean(all.iter().map(|p| {
        let (x, y) = (p.x.floor() as usize, p.y.floor() as usize);
        let (x, y) = (x.min(maps.width - 1), y.min(maps.height - 1));
        let mass: f32 = (0..=NON_BOUNDARY).map(|c| maps.boundary.get(c, x, y)).sum();
        if mass < OCCLUDED_MASS {
            1.0
        } else {
            0.0
        }
    })));
    let n = labels.len() as f64;
    for class in [LABEL_FLOOR, LABEL_WALL, LABEL_CEILING] {
        f.push(class_counts(&labels, class) as f64 / n);
    }
    let length: f64 = l.all_segments().iter().map(|s| s.length()).sum();
    f.push(length / (2.0 * (l.width_f() + l.height_f())));
    f.push(1.0);
    f.push(match cues {
        Some(c) if !c.segments.is_empty() => mean(all.iter().map(|p| {
            let on = c.segments.iter().any(|s| s.distance_to_point(*p) <= CUE_SUPPORT_PX);
            if on {
                1.0
            } else {
                0.0
            }
        })),
        _ => 0.0,
    });
    debug_assert_eq!(f.len(), FEATURE_DIM);
    Ok(f)
}

pub fn score_features(features: &[f64], params: &ScorerParams) -> Result<f64> {
    if features.len() != params.weights.len() {
        return Err(Error::DimensionMismatch(features.len(), 1, params.weights.len(), 1));
    }
    Ok(features.iter().zip(&params.weights).map(|(f, w)| f * w).sum::<f64>() + params.bias)
}

pub fn score(l: &Layout, maps: &FeatureMaps, cues: Option<&CueSet>, params: &ScorerParams) -> Result<f64> {
    score_features(&joint_features(l, maps, cues)?, params)
}

/// Hinge violations `max(0, s_i + Δ_i - s_gt)`, aggregated by `kind`
/// (largest for [`LossKind::StructureMax`], sum otherwise).
pub fn structure_cost(scores: &[f64], gt_score: f64, margins: &[f64], kind: LossKind) -> Result<f64> {
    if scores.len() != margins.len() {
        return Err(Error::LengthMismatch(scores.len(), margins.len()));
    }
    let hinge = scores.iter().zip(margins).map(|(s, d)| (s + d - gt_score).max(0.0));
    Ok(match kind {
        LossKind::StructureMax => hinge.fold(0.0, f64::max),
        _ => hinge.sum(),
    })
}

/// One image prepared for training: features of the ground truth and of
/// each candidate with its margin.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub gt_features: Vec<f64>,
    pub candidates: Vec<(Vec<f64>, f64)>,
}

impl TrainingExample {
    pub fn build(
        maps: &FeatureMaps,
        gt: &Layout,
        set: &CandidateSet,
        cues: Option<&CueSet>,
        floor_only: bool,
    ) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let candidates = set
            .layouts()
            .map(|l| Ok((joint_features(l, maps, cues)?, margin(l, gt, floor_only)?.total)))
            .collect::<Result<_>>()?;
        Ok(Self {
            gt_features: joint_features(gt, maps, cues)?,
            candidates,
        })
    }
}

/// Loss of one example and its (sub)gradient with respect to weights and bias.
pub fn example_objective(ex: &TrainingExample, params: &ScorerParams, kind: LossKind) -> Result<(f64, Vec<f64>, f64)> {
    let dim = params.weights.len();
    let mut grad = vec![0.0; dim];
    let mut grad_b = 0.0;
    let scores: Vec<f64> = ex
        .candidates
        .iter()
        .map(|(f, _)| score_features(f, params))
        .collect::<Result<_>>()?;
    let margins: Vec<f64> = ex.candidates.iter().map(|(_, d)| *d).collect();
    let loss = match kind {
        LossKind::L2 => {
            let n = scores.len() as f64;
            let mut loss = 0.0;
            for (s, (f, d)) in scores.iter().zip(&ex.candidates) {
                let r = s + d;
                loss += r * r / n;
                for (g, fi) in grad.iter_mut().zip(f) {
                    *g += 2.0 * r * fi / n;
                }
                grad_b += 2.0 * r / n;
            }
            loss
        }
        LossKind::StructureSum | LossKind::StructureMax => {
            let gt = score_features(&ex.gt_features, params)?;
            let loss = structure_cost(&scores, gt, &margins, kind)?;
            let active: Vec<usize> = match kind {
                LossKind::StructureMax => {
                    let worst = scores.iter().zip(&margins).map(|(s, d)| s + d - gt).enumerate().fold(
                        None,
                        |best: Option<(usize, f64)>, (i, v)| match best {
                            Some((_, b)) if b >= v => best,
                            _ => Some((i, v)),
                        },
                    );
                    worst.filter(|&(_, v)| v > 0.0).map(|(i, _)| i).into_iter().collect()
                }
                _ => (0..scores.len())
                    .filter(|&i| scores[i] + margins[i] - gt > 0.0)
                    .collect(),
            };
            for i in active {
                for ((g, fi), fg) in grad.iter_mut().zip(&ex.candidates[i].0).zip(&ex.gt_features) {
                    *g += fi - fg;
                }
            }
            loss
        }
    };
    Ok((loss, grad, grad_b))
}

/// Mini-batch subgradient descent from zero parameters.
pub fn train(examples: &[TrainingExample], cfg: &TrainConfig) -> Result<ScorerParams> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if examples.iter().any(|e| e.candidates.is_empty()) {
        return Err(Error::EmptyCandidates);
    }
    let mut params = ScorerParams::zeros();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; FEATURE_DIM];
            let mut grad_b = 0.0;
            let mut loss = 0.0;
            for &i in batch {
                let (l, g, gb) = example_objective(&examples[i], &params, cfg.loss_kind)?;
                loss += l;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
                grad_b += gb;
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(epoch));
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (w, g) in params.weights.iter_mut().zip(&grad) {
                *w -= step * g + cfg.learning_rate * cfg.l2_reg * *w;
            }
            params.bias -= step * grad_b;
            if !params.weights.iter().chain([&params.bias]).all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLoss(epoch));
            }
        }
    }
    Ok(params)
}

/// Scores of every candidate, in candidate order.
pub fn score_candidates(
    set: &CandidateSet,
    maps: &FeatureMaps,
    cues: Option<&CueSet>,
    params: &ScorerParams,
) -> Result<Vec<f64>> {
    set.layouts().map(|l| score(l, maps, cues, params)).collect()
}

/// Index of the highest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

/// Candidate indices by descending score, ties by index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // adding 0.0 folds -0.0 into 0.0 so signed zeros tie
    idx.sort_by(|&a, &b| (scores[b] + 0.0).total_cmp(&(scores[a] + 0.0)).then(a.cmp(&b)));
    idx
}

pub fn select_best<'a>(
    set: &'a CandidateSet,
    maps: &FeatureMaps,
    cues: Option<&CueSet>,
    params: &ScorerParams,
) -> Result<&'a Layout> {
    let scores = score_candidates(set, maps, cues, params)?;
    let i = argmax(&scores).ok_or(Error::EmptyCandidates)?;
    Ok(&set.candidates[i].layout)
}
