//! End-to-end commands over a dataset manifest: synthetic generation,
//! proposal, training, inference and evaluation.
//!
//! Images are processed in parallel; every output depends only on the
//! manifest, the configuration and per-image seeds derived from the image id.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use image::{GrayImage, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{e_corner, e_pixel, topk_table, ImageMetrics, MetricReport, TopKStat};
use crate::featuremaps::{occluders, predict_wall_count, render_oracle, FeatureMaps, NoiseConfig};
use crate::geometry::stroke_segment;
use crate::layout::{BoundaryClass, Layout};
use crate::proposal::{propose, CandidateSet, ProposalConfig};
use crate::refine::{extract_cues, extract_cues_from_maps, refine_candidates, CueSet, RefineConfig};
use crate::scoring::{ranking, score_candidates, train, ScorerParams, TrainConfig, TrainingExample};
use crate::synth::{load_photo, random_layout, render_photo, sample_config, save_photo, SceneParams};

pub const MAX_WALLS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub width: usize,
    pub height: usize,
    pub photo_noise_sigma: f64,
    /// Paint the map occluders into the photo as furniture.
    pub furniture: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            photo_noise_sigma: 2.0,
            furniture: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub top_k: Vec<usize>,
    pub top_k_stat: TopKStat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Replaces the wall count predicted from the complexity map.
    pub complexity_cap: Option<usize>,
    pub proposal: ProposalConfig,
    pub refine: RefineConfig,
    pub train: TrainConfig,
    pub noise: NoiseConfig,
    pub generate: GenerateConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            complexity_cap: None,
            proposal: ProposalConfig::default(),
            refine: RefineConfig::default(),
            train: TrainConfig::default(),
            noise: NoiseConfig::default(),
            generate: GenerateConfig::default(),
            eval: EvalConfig {
                top_k: vec![1, 5, 10, 20],
                top_k_stat: TopKStat::Mean,
            },
        }
    }
}

impl PipelineConfig {
    /// Parses TOML and applies `section.key=value` overrides on top of it.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.proposal.validate()?;
        self.refine.validate()?;
        self.train.validate()?;
        self.noise.validate()?;
        if self.complexity_cap == Some(0) {
            return Err(Error::Config("complexity_cap must be at least 1".into()));
        }
        if self.generate.width < 16
            || self.generate.height < 16
            || self.generate.photo_noise_sigma.is_nan()
            || self.generate.photo_noise_sigma < 0.0
        {
            return Err(Error::Config(
                "generate: images must be at least 16x16, noise >= 0".into(),
            ));
        }
        if self.eval.top_k.contains(&0) {
            return Err(Error::Config("eval.top_k entries must be >= 1".into()));
        }
        Ok(())
    }
}

fn apply_override(doc: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Stable per-image seed from the global seed and the image id.
pub fn image_seed(global: u64, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(image_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_id: String,
    pub maps_path: PathBuf,
    pub gt_layout_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub width: usize,
    pub height: usize,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    /// Loads and checks a manifest: unique ids, every referenced file present.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut ids = HashSet::new();
        for e in &m.entries {
            if !ids.insert(e.image_id.as_str()) {
                return Err(Error::Format(format!("duplicate image id {}", e.image_id)));
            }
            let paths = [Some(&e.maps_path), Some(&e.gt_layout_path), e.photo_path.as_ref()];
            for p in paths.into_iter().flatten() {
                let full = m.resolve(p);
                if !full.is_file() {
                    let err = std::io::Error::new(std::io::ErrorKind::NotFound, "file listed in manifest is missing");
                    return Err(Error::io(&full, err).for_entry(&e.image_id, &full));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
}

/// One loaded dataset image.
#[derive(Clone, Debug)]
pub struct Scene {
    pub image_id: String,
    pub maps: FeatureMaps,
    pub gt: Layout,
    pub photo: Option<GrayImage>,
}

pub fn load_scene(manifest: &Manifest, e: &ManifestEntry) -> Result<Scene> {
    let with = |p: &Path| {
        let full = manifest.resolve(p);
        move |err: Error| err.for_entry(&e.image_id, full)
    };
    let maps = FeatureMaps::load(&manifest.resolve(&e.maps_path)).map_err(with(&e.maps_path))?;
    let gt = Layout::load(&manifest.resolve(&e.gt_layout_path)).map_err(with(&e.gt_layout_path))?;
    gt.ensure_valid().map_err(with(&e.gt_layout_path))?;
    if (maps.width, maps.height) != (gt.image_width, gt.image_height) {
        let err = Error::DimensionMismatch(maps.width, maps.height, gt.image_width, gt.image_height);
        return Err(with(&e.maps_path)(err));
    }
    let photo = match &e.photo_path {
        Some(p) => Some(load_photo(&manifest.resolve(p)).map_err(with(p))?),
        None => None,
    };
    Ok(Scene {
        image_id: e.image_id.clone(),
        maps,
        gt,
        photo,
    })
}

pub fn load_scenes(manifest: &Manifest) -> Result<Vec<Scene>> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    manifest.entries.par_iter().map(|e| load_scene(manifest, e)).collect()
}

/// Candidates of one image together with the cues used to score them.
#[derive(Clone, Debug)]
pub struct Proposals {
    pub set: CandidateSet,
    pub cues: CueSet,
}

/// Cues come from the photo when there is one, otherwise from the maps.
pub fn cues_for(maps: &FeatureMaps, photo: Option<&GrayImage>, cfg: &PipelineConfig) -> Result<CueSet> {
    match photo {
        Some(img) => extract_cues(img, &cfg.refine),
        None => Ok(extract_cues_from_maps(maps, &cfg.refine)),
    }
}

pub fn build_candidates(
    image_id: &str,
    maps: &FeatureMaps,
    photo: Option<&GrayImage>,
    cfg: &PipelineConfig,
    cap_override: Option<usize>,
) -> Result<Proposals> {
    let cap = cap_override
        .or(cfg.complexity_cap)
        .unwrap_or_else(|| predict_wall_count(maps.complexity as f64));
    let mut cues = cues_for(maps, photo, cfg)?;
    cues.source_id = image_id.to_string();
    let mut set = propose(image_id, maps, cap, &cfg.proposal)?;
    if cfg.refine.enabled {
        set = refine_candidates(&set, &cues, &cfg.refine);
    }
    if set.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(Proposals { set, cues })
}

/// Candidates of a scene ordered by descending score.
#[derive(Clone, Debug)]
pub struct Ranked {
    pub set: CandidateSet,
    pub scores: Vec<f64>,
}

impl Ranked {
    pub fn best(&self) -> &Layout {
        &self.set.candidates[0].layout
    }
}

pub fn rank(props: &Proposals, maps: &FeatureMaps, params: &ScorerParams) -> Result<Ranked> {
    let scores = score_candidates(&props.set, maps, Some(&props.cues), params)?;
    let order = ranking(&scores);
    Ok(Ranked {
        set: CandidateSet {
            image_id: props.set.image_id.clone(),
            cue_source: props.set.cue_source,
            candidates: order.iter().map(|&i| props.set.candidates[i].clone()).collect(),
        },
        scores: order.iter().map(|&i| scores[i]).collect(),
    })
}

/// Samples `n` scenes into `out_dir`: maps, ground-truth layouts, photos and
/// the manifest.
pub fn generate(
    n: usize,
    walls_min: usize,
    walls_max: usize,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<Manifest> {
    if !(1 <= walls_min && walls_min <= walls_max && walls_max <= MAX_WALLS) {
        return Err(Error::Config(format!(
            "wall range {walls_min}..{walls_max} must satisfy 1 <= min <= max <= {MAX_WALLS}"
        )));
    }
    let entries: Vec<ManifestEntry> = (0..n)
        .map(|i| {
            let id = format!("scene_{i:05}");
            ManifestEntry {
                maps_path: PathBuf::from(format!("maps/{id}.rsnm")),
                gt_layout_path: PathBuf::from(format!("layouts/{id}.json")),
                photo_path: Some(PathBuf::from(format!("photos/{id}.png"))),
                image_id: id,
            }
        })
        .collect();
    for dir in ["maps", "layouts", "photos"] {
        let d = out_dir.join(dir);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let manifest = Manifest {
        width: cfg.generate.width,
        height: cfg.generate.height,
        entries,
        root: out_dir.to_path_buf(),
    };
    manifest.entries.par_iter().try_for_each(|e| {
        let scene = synthesize(&e.image_id, walls_min, walls_max, cfg)?;
        scene.maps.save(&manifest.resolve(&e.maps_path))?;
        scene.gt.save(&manifest.resolve(&e.gt_layout_path))?;
        save_photo(
            scene.photo.as_ref().unwrap(),
            &manifest.resolve(e.photo_path.as_ref().unwrap()),
        )
    })?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// One synthetic scene, fully determined by the seed and the image id.
pub fn synthesize(image_id: &str, walls_min: usize, walls_max: usize, cfg: &PipelineConfig) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, image_id));
    let params = SceneParams {
        width: cfg.generate.width,
        height: cfg.generate.height,
        ..SceneParams::default()
    };
    let walls = rng.random_range(walls_min..=walls_max);
    let surfaces = sample_config(&mut rng);
    let gt = random_layout(&mut rng, &params, walls, surfaces)?;
    let noise = NoiseConfig {
        seed: rng.random(),
        ..cfg.noise
    };
    let maps = render_oracle(&gt, &noise)?;
    let furniture = if cfg.generate.furniture {
        occluders(&noise, params.width, params.height)
    } else {
        Vec::new()
    };
    let photo = render_photo(&gt, &furniture, cfg.generate.photo_noise_sigma, &mut rng)?;
    Ok(Scene {
        image_id: image_id.to_string(),
        maps,
        gt,
        photo: Some(photo),
    })
}

fn entry_error(e: Error, manifest: &Manifest, entry: &ManifestEntry) -> Error {
    match e {
        Error::Entry { .. } => e,
        other => other.for_entry(&entry.image_id, manifest.resolve(&entry.maps_path)),
    }
}

/// Writes `candidates/<id>.json` for every image; returns the candidate counts.
pub fn propose_dataset(manifest: &Manifest, cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<usize>> {
    let dir = out_dir.join("candidates");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let scene = load_scene(manifest, e)?;
            let props = build_candidates(&scene.image_id, &scene.maps, scene.photo.as_ref(), cfg, None)
                .map_err(|err| entry_error(err, manifest, e))?;
            let path = dir.join(format!("{}.json", e.image_id));
            crate::io::write_atomic(&path, props.set.to_json().as_bytes())?;
            Ok(props.set.len())
        })
        .collect()
}

fn example_for(s: &Scene, cfg: &PipelineConfig) -> Result<TrainingExample> {
    let props = build_candidates(&s.image_id, &s.maps, s.photo.as_ref(), cfg, None)?;
    TrainingExample::build(&s.maps, &s.gt, &props.set, Some(&props.cues), cfg.train.floor_only_area)
}

/// Training examples for the scenes, in scene order.
pub fn training_examples(scenes: &[Scene], cfg: &PipelineConfig) -> Result<Vec<TrainingExample>> {
    scenes.par_iter().map(|s| example_for(s, cfg)).collect()
}

pub fn train_dataset(manifest: &Manifest, cfg: &PipelineConfig) -> Result<ScorerParams> {
    let scenes = load_scenes(manifest)?;
    let examples = scenes
        .par_iter()
        .zip(&manifest.entries)
        .map(|(s, e)| example_for(s, cfg).map_err(|err| entry_error(err, manifest, e)))
        .collect::<Result<Vec<_>>>()?;
    train(&examples, &cfg.train)
}

/// Runs the full pipeline on one image.
pub fn infer_scene(
    image_id: &str,
    maps: &FeatureMaps,
    photo: Option<&GrayImage>,
    cfg: &PipelineConfig,
    params: &ScorerParams,
    cap_override: Option<usize>,
) -> Result<Ranked> {
    let props = build_candidates(image_id, maps, photo, cfg, cap_override)?;
    rank(&props, maps, params)
}

/// Writes `predictions/<id>.json` (selected layout), `predictions/<id>.ranked.json`
/// (all candidates by descending score) and optionally `overlays/<id>.png`.
pub fn infer_dataset(
    manifest: &Manifest,
    cfg: &PipelineConfig,
    params: &ScorerParams,
    out_dir: &Path,
    overlays: bool,
) -> Result<Vec<Layout>> {
    let pred = out_dir.join("predictions");
    std::fs::create_dir_all(&pred).map_err(|e| Error::io(&pred, e))?;
    let over = out_dir.join("overlays");
    if overlays {
        std::fs::create_dir_all(&over).map_err(|e| Error::io(&over, e))?;
    }
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let scene = load_scene(manifest, e)?;
            let ranked = infer_scene(&scene.image_id, &scene.maps, scene.photo.as_ref(), cfg, params, None)
                .map_err(|err| entry_error(err, manifest, e))?;
            let best = ranked.best().clone();
            best.save(&pred.join(format!("{}.json", e.image_id)))?;
            crate::io::write_atomic(
                &pred.join(format!("{}.ranked.json", e.image_id)),
                ranked.set.to_json().as_bytes(),
            )?;
            if overlays {
                let img = overlay(&best, &scene.maps, scene.photo.as_ref())?;
                save_rgb(&img, &over.join(format!("{}.png", e.image_id)))?;
            }
            Ok(best)
        })
        .collect()
}

/// Scores predictions in `pred_dir` against the ground truth. Ranked
/// candidate files, when present for every image, add the gt rank and the
/// top-k table.
pub fn evaluate_dataset(manifest: &Manifest, pred_dir: &Path, cfg: &PipelineConfig) -> Result<MetricReport> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows = manifest
        .entries
        .par_iter()
        .map(|e| {
            let gt_path = manifest.resolve(&e.gt_layout_path);
            let gt = Layout::load(&gt_path).map_err(|err| err.for_entry(&e.image_id, &gt_path))?;
            let path = pred_dir.join(format!("{}.json", e.image_id));
            let pred = Layout::load(&path).map_err(|err| err.for_entry(&e.image_id, &path))?;
            let attach = |err: Error| err.for_entry(&e.image_id, &path);
            let ep = e_pixel(&pred, &gt).map_err(attach)?;
            let ec = e_corner(&pred, &gt).map_err(attach)?;
            let ranked_path = pred_dir.join(format!("{}.ranked.json", e.image_id));
            let ranked_errs = if ranked_path.is_file() {
                let text = std::fs::read_to_string(&ranked_path).map_err(|err| Error::io(&ranked_path, err))?;
                let set = CandidateSet::from_json(&text).map_err(|err| err.for_entry(&e.image_id, &ranked_path))?;
                let errs = set
                    .layouts()
                    .map(|l| e_pixel(l, &gt))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|err| err.for_entry(&e.image_id, &ranked_path))?;
                Some(errs)
            } else {
                None
            };
            let rank_of_gt = ranked_errs.as_ref().and_then(|errs| rank_of_nearest(errs));
            let metrics = ImageMetrics {
                image_id: e.image_id.clone(),
                e_pixel: ep,
                e_corner: ec,
                rank_of_gt,
            };
            Ok((metrics, ranked_errs))
        })
        .collect::<Result<Vec<_>>>()?;
    let ranked: Option<Vec<Vec<f64>>> = rows.iter().map(|r| r.1.clone()).collect();
    let top_k = match ranked {
        Some(r) if !cfg.eval.top_k.is_empty() => topk_table(&r, &cfg.eval.top_k, cfg.eval.top_k_stat)?,
        _ => BTreeMap::new(),
    };
    MetricReport::from_images(rows.into_iter().map(|r| r.0).collect(), top_k)
}

/// 1-based rank of the first candidate with the lowest error.
pub fn rank_of_nearest(errs: &[f64]) -> Option<usize> {
    errs.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i + 1)
}

const OVERLAY_COLORS: [[u8; 3]; 3] = [[230, 40, 40], [40, 200, 60], [60, 90, 240]];

/// The layout drawn over the photo (or the boundary map when there is none).
pub fn overlay(layout: &Layout, maps: &FeatureMaps, photo: Option<&GrayImage>) -> Result<RgbImage> {
    let (w, h) = (maps.width, maps.height);
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = match photo {
            Some(p) if p.width() as usize == w && p.height() as usize == h => p.get_pixel(x, y).0[0],
            _ => {
                (255.0
                    * maps
                        .boundary
                        .get(crate::featuremaps::NON_BOUNDARY, x as usize, y as usize)) as u8
            }
        };
        Rgb([v, v, v])
    });
    for class in BoundaryClass::ALL {
        let color = Rgb(OVERLAY_COLORS[class.channel()]);
        for seg in layout.segments(class) {
            stroke_segment(&seg, 1, w, h, |x, y| img.put_pixel(x as u32, y as u32, color));
        }
    }
    Ok(img)
}

fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    crate::io::write_atomic(path, &bytes)
}
