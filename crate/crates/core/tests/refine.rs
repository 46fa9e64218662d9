use image::{GrayImage, Luma};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roomlayout::featuremaps::{render_oracle, NoiseConfig};
use roomlayout::geometry::rasterize_polygon;
use roomlayout::proposal::{Candidate, CandidateSet, Provenance};
use roomlayout::refine::*;
use roomlayout::synth::{random_layout, SceneParams, SurfaceConfig};
use roomlayout::{Error, Layout, Point, Segment, WwBoundary};

fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment {
    Segment::new(Point::new(ax, ay), Point::new(bx, by)).unwrap()
}

fn cues(segments: Vec<Segment>) -> CueSet {
    CueSet {
        source_id: "test".into(),
        source: CueSource::Photo,
        segments,
    }
}

fn two_boundaries() -> Layout {
    Layout::new(128, 128, true, true).with_boundaries(vec![
        WwBoundary::new(Point::new(40.0, 100.0), Point::new(40.0, 25.0)),
        WwBoundary::new(Point::new(90.0, 100.0), Point::new(90.0, 25.0)),
    ])
}

fn corner_shift(a: &Layout, b: &Layout) -> f64 {
    a.boundaries
        .iter()
        .zip(&b.boundaries)
        .map(|(p, q)| p.floor.dist(q.floor).max(p.ceil.dist(q.ceil)))
        .fold(0.0, f64::max)
}

#[test]
fn quad_edges_are_recovered() {
    let quad = [
        Point::new(30.0, 28.0),
        Point::new(100.0, 34.0),
        Point::new(94.0, 102.0),
        Point::new(24.0, 92.0),
    ];
    let mask = rasterize_polygon(&quad, 128, 128).unwrap();
    let img = GrayImage::from_fn(128, 128, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    let found = extract_cues(&img, &RefineConfig::default()).unwrap().segments;
    assert_eq!(found.len(), 4, "{found:?}");
    let edges: Vec<Segment> = (0..4)
        .map(|i| Segment::new(quad[i], quad[(i + 1) % 4]).unwrap())
        .collect();
    let mut matched = [false; 4];
    for s in &found {
        let k = edges
            .iter()
            .position(|e| e.distance_to_line(s.a) <= 2.0 && e.distance_to_line(s.b) <= 2.0)
            .unwrap_or_else(|| panic!("{s:?} is not on a quad edge"));
        matched[k] = true;
    }
    assert!(matched.iter().all(|&m| m));
}

#[test]
fn constant_image_has_no_cues() {
    let img = GrayImage::from_pixel(64, 64, Luma([128]));
    assert!(extract_cues(&img, &RefineConfig::default())
        .unwrap()
        .segments
        .is_empty());
}

#[test]
fn step_edge_gives_one_vertical_cue() {
    let img = GrayImage::from_fn(128, 128, |x, _| Luma([if x < 64 { 40 } else { 200 }]));
    let found = extract_cues(&img, &RefineConfig::default()).unwrap().segments;
    assert_eq!(found.len(), 1);
    let s = found[0];
    assert!((s.a.x - 64.0).abs() < 1.0 && (s.b.x - 64.0).abs() < 1.0, "{s:?}");
    assert!(s.length() > 100.0);
}

#[test]
fn empty_image_is_rejected() {
    let img = GrayImage::new(0, 0);
    assert!(matches!(
        extract_cues(&img, &RefineConfig::default()),
        Err(Error::EmptyInput)
    ));
}

#[test]
fn map_cues_follow_the_ridges() {
    let gt = two_boundaries();
    let maps = render_oracle(&gt, &NoiseConfig::noiseless()).unwrap();
    let set = extract_cues_from_maps(&maps, &RefineConfig::default());
    assert_eq!(set.source, CueSource::BoundaryMap);
    for truth in gt.ww_segments() {
        let hit = set
            .segments
            .iter()
            .any(|c| truth.distance_to_line(c.a) < 1.0 && truth.distance_to_line(c.b) < 1.0);
        assert!(hit, "no cue along {truth:?}");
    }
}

#[test]
fn offset_cue_pulls_the_boundary_onto_it() {
    let layout = Layout::new(128, 128, true, true)
        .with_boundaries(vec![WwBoundary::new(Point::new(50.0, 100.0), Point::new(50.0, 20.0))]);
    let cue = seg(53.0, 10.0, 53.0, 115.0);
    let out = align_layout(&layout, &cues(vec![cue]), &RefineConfig::default());
    assert!(!out.is_empty());
    for c in &out {
        let b = &c.layout.boundaries[0];
        assert!(cue.distance_to_line(b.floor) < 1e-9 && cue.distance_to_line(b.ceil) < 1e-9);
        assert!(corner_shift(&c.layout, &layout) <= 5.0);
    }
}

#[test]
fn distant_cues_leave_nothing_to_align() {
    let layout = two_boundaries();
    let far = seg(10.0, 10.0, 10.0, 110.0);
    assert!(align_layout(&layout, &cues(vec![far]), &RefineConfig::default()).is_empty());
    assert!(align_layout(&layout, &cues(vec![]), &RefineConfig::default()).is_empty());
}

#[test]
fn two_matches_give_two_intermediates_and_one_final() {
    let layout = two_boundaries();
    let set = cues(vec![seg(42.0, 15.0, 42.0, 110.0), seg(87.0, 15.0, 87.5, 110.0)]);
    let out = align_layout(&layout, &set, &RefineConfig::default());
    let count = |p: Provenance| out.iter().filter(|c| c.provenance == p).count();
    assert_eq!(out.len(), 3);
    assert_eq!(count(Provenance::AlignedIntermediate), 2);
    assert_eq!(count(Provenance::AlignedFinal), 1);
}

#[test]
fn refine_keeps_originals_first_and_drops_near_duplicates() {
    let layout = two_boundaries();
    let set = CandidateSet {
        image_id: "r".into(),
        cue_source: None,
        candidates: vec![Candidate {
            provenance: Provenance::Initialized,
            layout: layout.clone(),
        }],
    };
    // one cue far enough to matter, one within the duplicate tolerance
    let c = cues(vec![seg(44.0, 15.0, 44.0, 110.0), seg(90.4, 15.0, 90.4, 110.0)]);
    let out = refine_candidates(&set, &c, &RefineConfig::default());
    assert_eq!(out.cue_source, Some(CueSource::Photo));
    assert_eq!(out.candidates[0], set.candidates[0]);
    for (i, a) in out.layouts().enumerate() {
        for b in out.layouts().skip(i + 1) {
            assert!(!near_duplicate(a, b, 1.0));
        }
    }
    assert!(out.len() >= 2);
}

fn random_room(seed: u64, walls: usize) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_layout(
        &mut rng,
        &SceneParams::default(),
        walls,
        SurfaceConfig {
            ceiling: true,
            floor: true,
        },
    )
    .unwrap()
}

/// Cues along every wall-wall line, shifted sideways by `dx`.
fn shifted_ww_cues(layout: &Layout, dx: f64) -> CueSet {
    cues(
        layout
            .ww_segments()
            .iter()
            .map(|s| {
                let d = s.unit_direction();
                let (a, b) = (s.a - d * 10.0, s.b + d * 10.0);
                seg(a.x + dx, a.y, b.x + dx, b.y)
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aligned_layouts_are_valid_and_bounded(seed in 0u64..100_000, walls in 2usize..=5, dx in -12.0f64..12.0) {
        let layout = random_room(seed, walls);
        let cfg = RefineConfig::default();
        for c in align_layout(&layout, &shifted_ww_cues(&layout, dx), &cfg) {
            prop_assert!(c.layout.is_valid());
            prop_assert!(corner_shift(&c.layout, &layout) <= 2.0 * cfg.align_distance_px + 1e-9);
        }
    }

    #[test]
    fn alignment_is_idempotent(seed in 0u64..100_000, walls in 2usize..=5, dx in -6.0f64..6.0) {
        let layout = random_room(seed, walls);
        let cfg = RefineConfig::default();
        let cue_set = shifted_ww_cues(&layout, dx);
        let once = align_layout(&layout, &cue_set, &cfg);
        if let Some(fin) = once.iter().find(|c| c.provenance == Provenance::AlignedFinal) {
            for again in align_layout(&fin.layout, &cue_set, &cfg) {
                prop_assert!(corner_shift(&again.layout, &fin.layout) <= 0.5);
            }
        }
    }
}
