use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roomlayout::featuremaps::{render_oracle, NoiseConfig};
use roomlayout::layout::BoundaryClass;
use roomlayout::proposal::{Candidate, CandidateSet, Provenance};
use roomlayout::scoring::*;
use roomlayout::synth::{random_layout, SceneParams, SurfaceConfig};
use roomlayout::{Error, Layout, Point, WwBoundary};

fn b(fx: f64, fy: f64, cx: f64, cy: f64) -> WwBoundary {
    WwBoundary::new(Point::new(fx, fy), Point::new(cx, cy))
}

fn cuboid() -> Layout {
    Layout::new(100, 100, true, true).with_boundaries(vec![b(30.0, 80.0, 30.0, 20.0), b(70.0, 80.0, 70.0, 20.0)])
}

fn random_room(seed: u64, walls: usize, cfg: SurfaceConfig) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_layout(&mut rng, &SceneParams::default(), walls, cfg).unwrap()
}

/// Floor below the horizontal line `y`, single wall, no ceiling.
fn floor_at(y: f64) -> Layout {
    Layout::new(100, 100, false, true).with_boundaries(vec![b(0.0, y, 0.0, 0.0)])
}

/// 64 samples spread by arc length along a polyline set, with directions.
fn oracle_samples(l: &Layout, class: BoundaryClass) -> Vec<(f64, f64, f64, f64)> {
    let segs = l.segments(class);
    let lens: Vec<f64> = segs.iter().map(|s| (s.b.x - s.a.x).hypot(s.b.y - s.a.y)).collect();
    let total: f64 = lens.iter().sum();
    if segs.is_empty() {
        return Vec::new();
    }
    (0..64)
        .map(|i| {
            let mut t = (i as f64 + 0.5) / 64.0 * total;
            let mut k = 0;
            while k + 1 < segs.len() && t > lens[k] {
                t -= lens[k];
                k += 1;
            }
            let s = &segs[k];
            let u = ((s.b.x - s.a.x) / lens[k], (s.b.y - s.a.y) / lens[k]);
            let f = (t / lens[k]).min(1.0);
            (s.a.x + f * (s.b.x - s.a.x), s.a.y + f * (s.b.y - s.a.y), u.0, u.1)
        })
        .collect()
}

/// Brute-force line margin split into (pixel, angular) parts.
fn oracle_d_line(l: &Layout, gt: &Layout) -> (f64, f64) {
    let diag = (gt.image_width as f64).hypot(gt.image_height as f64);
    let (mut pix, mut ang) = (0.0, 0.0);
    for class in BoundaryClass::ALL {
        let (a, b) = (oracle_samples(l, class), oracle_samples(gt, class));
        match (a.is_empty(), b.is_empty()) {
            (true, true) => {}
            (false, false) => {
                let one_way = |p: &[(f64, f64, f64, f64)], q: &[(f64, f64, f64, f64)]| {
                    let mut d = 0.0;
                    let mut c = 0.0;
                    for s in p {
                        let mut best = (f64::INFINITY, 0.0);
                        for r in q {
                            let dist = (s.0 - r.0).hypot(s.1 - r.1);
                            if dist < best.0 {
                                best = (dist, 1.0 - (s.2 * r.2 + s.3 * r.3).abs());
                            }
                        }
                        d += best.0;
                        c += best.1;
                    }
                    (d / p.len() as f64, c / p.len() as f64)
                };
                let (dab, cab) = one_way(&a, &b);
                let (dba, cba) = one_way(&b, &a);
                pix += (0.5 * (dab + dba) / diag).powi(2);
                ang += 0.5 * (cab + cba);
            }
            _ => pix += 2.0,
        }
    }
    (pix, ang)
}

#[test]
fn line_margin_vanishes_at_identity() {
    for seed in 0..20 {
        let l = random_room(seed, 1 + seed as usize % 5, SurfaceConfig::ALL[seed as usize % 4]);
        assert!(d_line(&l, &l).unwrap().abs() < 1e-12);
    }
}

#[test]
fn line_margin_matches_chamfer_oracle_for_moved_corner() {
    let gt = cuboid();
    let mut l = gt.clone();
    l.boundaries[0].floor = Point::new(36.0, 88.0);
    let (pix, ang) = oracle_d_line(&l, &gt);
    assert!(pix > 0.0);
    let got = d_line(&l, &gt).unwrap();
    assert!((got - (pix + ang)).abs() < 1e-9, "{got} vs {}", pix + ang);
}

#[test]
fn perpendicular_boundaries_have_unit_angular_term() {
    let img = |fx: f64, cx: f64| Layout::new(200, 100, false, false).with_boundaries(vec![b(fx, 100.0, cx, 0.0)]);
    let (l, gt) = (img(50.0, 150.0), img(150.0, 50.0));
    let (pix, ang) = oracle_d_line(&l, &gt);
    assert!((ang - 1.0).abs() < 1e-12, "angular {ang}");
    let got = d_line(&l, &gt).unwrap();
    assert!((got - pix - 1.0).abs() < 1e-9);
}

#[test]
fn line_margin_rejects_mismatched_sizes() {
    let other = Layout::new(50, 100, true, true).with_boundaries(vec![b(20.0, 80.0, 20.0, 20.0)]);
    assert!(matches!(d_line(&cuboid(), &other), Err(Error::DimensionMismatch(..))));
    assert!(matches!(
        d_area(&cuboid(), &other, true),
        Err(Error::DimensionMismatch(..))
    ));
}

#[test]
fn area_margin_cases() {
    let gt = floor_at(60.0);
    assert_eq!(d_area(&gt, &gt, true).unwrap(), 0.0);
    assert_eq!(d_area(&gt, &gt, false).unwrap(), 0.0);

    // lower half of the floor: coverage 0.5, IoU 0.5
    let half = floor_at(80.0);
    let (a, g) = (half.label_map().unwrap(), gt.label_map().unwrap());
    let count = |m: &[u8]| m.iter().filter(|&&v| v == roomlayout::layout::LABEL_FLOOR).count();
    assert_eq!((count(&a), count(&g)), (2000, 4000));
    assert!((d_area(&half, &gt, true).unwrap() - 1.0).abs() < 1e-12);
}

/// Two layouts whose floors are disjoint triangles.
fn disjoint_pair() -> (Layout, Layout) {
    let left =
        Layout::new(100, 100, false, true).with_boundaries(vec![b(0.0, 60.0, 0.0, 0.0), b(50.0, 100.0, 50.0, 0.0)]);
    let right =
        Layout::new(100, 100, false, true).with_boundaries(vec![b(50.0, 100.0, 50.0, 0.0), b(100.0, 60.0, 100.0, 0.0)]);
    (left, right)
}

#[test]
fn disjoint_floors_give_area_margin_two() {
    let (l, r) = disjoint_pair();
    let (a, g) = (l.label_map().unwrap(), r.label_map().unwrap());
    let floor = roomlayout::layout::LABEL_FLOOR;
    assert!(a.contains(&floor) && g.contains(&floor));
    assert!(!a.iter().zip(&g).any(|(x, y)| *x == floor && *y == floor));
    assert_eq!(d_area(&l, &r, true).unwrap(), 2.0);
}

#[test]
fn margin_composition() {
    let gt = cuboid();
    let m = margin(&gt, &gt, true).unwrap();
    assert_eq!((m.d_line, m.d_area, m.total), (0.0, 0.0, 0.0));

    let (l, r) = disjoint_pair();
    let m = margin(&l, &r, true).unwrap();
    assert_eq!(m.total, m.d_line + 2.0);

    // one layout without a floor at all
    let bare = Layout::new(100, 100, false, false);
    let m = margin(&floor_at(60.0), &bare, true).unwrap();
    assert!((m.total - (d_line(&floor_at(60.0), &bare).unwrap() + 2.0)).abs() < 1e-12);
}

#[test]
fn margin_grows_with_corner_displacement() {
    let gt = cuboid();
    let moved = |dx: f64| {
        let mut l = gt.clone();
        l.boundaries[0].floor.x -= dx;
        margin(&l, &gt, true).unwrap().total
    };
    let (ten, twenty) = (moved(10.0), moved(20.0));
    assert!(ten > 0.0);
    assert!(twenty >= ten, "{twenty} < {ten}");
}

#[test]
fn features_on_noiseless_oracle() {
    let gt = random_room(
        3,
        3,
        SurfaceConfig {
            ceiling: true,
            floor: true,
        },
    );
    let maps = render_oracle(&gt, &NoiseConfig::noiseless()).unwrap();
    let f = joint_features(&gt, &maps, None).unwrap();
    assert_eq!(f.len(), FEATURE_DIM);
    for (i, v) in f[..3].iter().enumerate() {
        assert!(*v > 0.85, "boundary feature {i} = {v}");
    }
    assert!(f[3] < 0.15, "non-boundary feature {}", f[3]);
    assert_eq!(f[15], 1.0);
    assert_eq!(f[16], 0.0);
}

#[test]
fn boundary_through_floor_lowers_wall_agreement() {
    let gt = cuboid();
    let maps = render_oracle(&gt, &NoiseConfig::noiseless()).unwrap();
    let mut l = gt.clone();
    l.boundaries[0].floor = Point::new(30.0, 97.0);
    l.boundaries[1].floor = Point::new(70.0, 97.0);
    let wall = 7;
    let fg = joint_features(&gt, &maps, None).unwrap();
    let fl = joint_features(&l, &maps, None).unwrap();
    assert!(fl[wall] < fg[wall], "{} vs {}", fl[wall], fg[wall]);
}

#[test]
fn features_reject_mismatched_maps() {
    let maps = render_oracle(&cuboid(), &NoiseConfig::noiseless()).unwrap();
    let other = random_room(
        1,
        2,
        SurfaceConfig {
            ceiling: true,
            floor: true,
        },
    );
    assert!(matches!(
        joint_features(&other, &maps, None),
        Err(Error::DimensionMismatch(..))
    ));
}

#[test]
fn scorer_identities() {
    let gt = cuboid();
    let maps = render_oracle(&gt, &NoiseConfig::noiseless()).unwrap();
    assert_eq!(score(&gt, &maps, None, &ScorerParams::zeros()).unwrap(), 0.0);
    let mut one_hot = ScorerParams::zeros();
    one_hot.weights[15] = 1.0;
    assert_eq!(score(&gt, &maps, None, &one_hot).unwrap(), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rand_params = || ScorerParams {
        weights: (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
        bias: rng.random_range(-1.0..1.0),
    };
    let (p, q) = (rand_params(), rand_params());
    let sum = ScorerParams {
        weights: p.weights.iter().zip(&q.weights).map(|(a, b)| a + b).collect(),
        bias: p.bias + q.bias,
    };
    let s = |w: &ScorerParams| score(&gt, &maps, None, w).unwrap();
    assert!((s(&sum) - s(&p) - s(&q)).abs() < 1e-9);
    assert!(matches!(score_features(&[1.0], &p), Err(Error::DimensionMismatch(..))));
}

#[test]
fn hinge_examples() {
    let c2 = |s: &[f64], g: f64, d: &[f64]| structure_cost(s, g, d, LossKind::StructureSum).unwrap();
    let c1 = |s: &[f64], g: f64, d: &[f64]| structure_cost(s, g, d, LossKind::StructureMax).unwrap();
    assert_eq!(c2(&[3.0], 5.0, &[1.0]), 0.0);
    assert_eq!(c1(&[5.0], 5.0, &[2.0]), 2.0);
    assert_eq!(c2(&[5.0], 5.0, &[2.0]), 2.0);
    assert_eq!(c1(&[1.0, 2.0], 5.0, &[0.5, 1.0]), 0.0);
    assert_eq!(c2(&[1.0, 2.0], 5.0, &[0.5, 1.0]), 0.0);
    assert!(matches!(
        structure_cost(&[1.0, 2.0], 0.0, &[1.0], LossKind::StructureSum),
        Err(Error::LengthMismatch(2, 1))
    ));
}

fn random_example(rng: &mut ChaCha8Rng, n: usize) -> TrainingExample {
    let mut feats = || {
        (0..FEATURE_DIM)
            .map(|_| rng.random_range(0.0..1.0))
            .collect::<Vec<f64>>()
    };
    let gt_features = feats();
    let candidates = (0..n).map(|_| (feats(), 0.0)).collect::<Vec<_>>();
    let candidates = candidates
        .into_iter()
        .map(|(f, _)| (f, rng.random_range(0.0..2.0)))
        .collect();
    TrainingExample {
        gt_features,
        candidates,
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..20 {
        let ex = random_example(&mut rng, 8);
        let params = ScorerParams {
            weights: (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: rng.random_range(-1.0..1.0),
        };
        for kind in [LossKind::StructureSum, LossKind::L2] {
            // skip points near a hinge kink
            let gt_s = score_features(&ex.gt_features, &params).unwrap();
            let near_kink = ex
                .candidates
                .iter()
                .any(|(f, d)| (score_features(f, &params).unwrap() + d - gt_s).abs() <= 1e-3);
            if kind == LossKind::StructureSum && near_kink {
                continue;
            }
            let (_, grad, grad_b) = example_objective(&ex, &params, kind).unwrap();
            let h = 1e-6;
            for i in 0..=FEATURE_DIM {
                let shifted = |delta: f64| {
                    let mut p = params.clone();
                    if i < FEATURE_DIM {
                        p.weights[i] += delta;
                    } else {
                        p.bias += delta;
                    }
                    example_objective(&ex, &p, kind).unwrap().0
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let an = if i < FEATURE_DIM { grad[i] } else { grad_b };
                let rel = (fd - an).abs() / an.abs().max(1.0);
                assert!(rel <= 1e-4, "{kind:?} coordinate {i}: fd {fd} vs {an}");
            }
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<TrainingExample> = (0..12).map(|_| random_example(&mut rng, 6)).collect();
    for kind in [LossKind::StructureSum, LossKind::StructureMax, LossKind::L2] {
        let cfg = TrainConfig {
            loss_kind: kind,
            seed: 5,
            ..TrainConfig::default()
        };
        let (a, b) = (train(&data, &cfg).unwrap(), train(&data, &cfg).unwrap());
        assert_eq!(a.to_text(), b.to_text());
        assert!(a
            .weights
            .iter()
            .zip(&b.weights)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn tiny_learning_rate_leaves_index_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<TrainingExample> = (0..4).map(|_| random_example(&mut rng, 5)).collect();
    let cfg = TrainConfig {
        learning_rate: 1e-300,
        ..TrainConfig::default()
    };
    let p = train(&data, &cfg).unwrap();
    assert!(p.weights.iter().chain([&p.bias]).all(|v| v.abs() < 1e-280));
    let scores: Vec<f64> = data[0]
        .candidates
        .iter()
        .map(|(f, _)| (score_features(f, &p).unwrap() * 1e9).round())
        .collect();
    assert_eq!(ranking(&scores), (0..5).collect::<Vec<_>>());
    assert_eq!(argmax(&scores), Some(0));
}

#[test]
fn dominant_ground_truth_is_ranked_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<TrainingExample> = (0..40)
        .map(|_| {
            let mut ex = random_example(&mut rng, 10);
            for i in 0..3 {
                ex.gt_features[i] = rng.random_range(0.9..1.0);
                for (f, _) in &mut ex.candidates {
                    f[i] = rng.random_range(0.0..0.85);
                }
            }
            ex
        })
        .collect();
    let p = train(&data, &TrainConfig::default()).unwrap();
    let first = data
        .iter()
        .filter(|ex| {
            let g = score_features(&ex.gt_features, &p).unwrap();
            ex.candidates.iter().all(|(f, _)| score_features(f, &p).unwrap() < g)
        })
        .count();
    assert!(first * 10 >= data.len() * 9, "{first}/{}", data.len());
}

#[test]
fn training_rejects_bad_input() {
    assert!(matches!(train(&[], &TrainConfig::default()), Err(Error::EmptyDataset)));
    let ex = TrainingExample {
        gt_features: vec![0.0; FEATURE_DIM],
        candidates: vec![],
    };
    assert!(matches!(
        train(&[ex], &TrainConfig::default()),
        Err(Error::EmptyCandidates)
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = vec![random_example(&mut rng, 3)];
    for cfg in [
        TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            l2_reg: -1.0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(train(&data, &cfg), Err(Error::Config(_))));
    }
}

#[test]
fn divergence_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<TrainingExample> = (0..4).map(|_| random_example(&mut rng, 4)).collect();
    let cfg = TrainConfig {
        loss_kind: LossKind::L2,
        learning_rate: 1e150,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&data, &cfg), Err(Error::NonFiniteLoss(_))));
}

fn set_of(layouts: Vec<Layout>) -> CandidateSet {
    CandidateSet {
        image_id: "s".into(),
        cue_source: None,
        candidates: layouts
            .into_iter()
            .map(|layout| Candidate {
                provenance: Provenance::Initialized,
                layout,
            })
            .collect(),
    }
}

#[test]
fn selection() {
    let gt = cuboid();
    let maps = render_oracle(&gt, &NoiseConfig::noiseless()).unwrap();
    let single = set_of(vec![gt.clone()]);
    assert_eq!(select_best(&single, &maps, None, &ScorerParams::zeros()).unwrap(), &gt);
    assert!(matches!(
        select_best(&set_of(vec![]), &maps, None, &ScorerParams::zeros()),
        Err(Error::EmptyCandidates)
    ));
    assert_eq!(argmax(&[1.0, 3.0, 2.0]), Some(1));
    assert_eq!(argmax(&[1.0 + 7.5, 3.0 + 7.5, 2.0 + 7.5]), Some(1));
    assert_eq!(argmax(&[]), None);
    assert_eq!(argmax(&[2.0, 2.0]), Some(0));
}

#[test]
fn params_text_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = ScorerParams {
        weights: (0..FEATURE_DIM).map(|_| rng.random_range(-3.0..3.0)).collect(),
        bias: 0.1 + 0.2,
    };
    let back = ScorerParams::from_text(&p.to_text()).unwrap();
    assert_eq!(back, p);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.txt");
    p.save(&path).unwrap();
    assert_eq!(ScorerParams::load(&path).unwrap(), p);

    let old = p.to_text().replace(FEATURE_VERSION, "joint-v0");
    assert!(matches!(ScorerParams::from_text(&old), Err(Error::Format(_))));
    let short = p.to_text().replace(&format!("dim {FEATURE_DIM}"), "dim 3");
    assert!(matches!(ScorerParams::from_text(&short), Err(Error::Format(_))));
    assert!(matches!(ScorerParams::from_text(""), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn margin_is_non_negative_and_zero_on_self(
        s1 in 0u64..10_000, s2 in 0u64..10_000,
        w1 in 1usize..=5, w2 in 1usize..=5,
        c1 in 0usize..4, c2 in 0usize..4,
        floor_only in any::<bool>(),
    ) {
        let a = random_room(s1, w1, SurfaceConfig::ALL[c1]);
        let b = random_room(s2, w2, SurfaceConfig::ALL[c2]);
        let m = margin(&a, &b, floor_only).unwrap();
        prop_assert!(m.d_line >= 0.0 && m.d_area >= 0.0);
        prop_assert_eq!(m.total, m.d_line + m.d_area);
        prop_assert!(margin(&a, &a, floor_only).unwrap().total.abs() <= 1e-6);
    }

    #[test]
    fn max_hinge_never_exceeds_sum(
        rows in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 0..20),
        gt in -5.0f64..5.0,
    ) {
        let (s, d): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let c1 = structure_cost(&s, gt, &d, LossKind::StructureMax).unwrap();
        let c2 = structure_cost(&s, gt, &d, LossKind::StructureSum).unwrap();
        prop_assert!(c1 >= 0.0 && c1 <= c2 + 1e-12);
        let satisfied = s.iter().zip(&d).all(|(a, b)| gt >= a + b);
        prop_assert_eq!(c2 == 0.0, satisfied);
    }

    #[test]
    fn argmax_survives_increasing_transforms(scores in prop::collection::vec(-50i32..50, 1..30)) {
        let base: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let want = argmax(&base);
        let transforms: [fn(f64) -> f64; 3] = [|x| 2.0 * x + 7.0, |x| (x / 10.0).exp(), |x| x * x * x];
        for t in transforms {
            let moved: Vec<f64> = base.iter().map(|&x| t(x)).collect();
            prop_assert_eq!(argmax(&moved), want);
            prop_assert_eq!(ranking(&moved), ranking(&base));
        }
    }
}
