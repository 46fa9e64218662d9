use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roomlayout::featuremaps::{render_oracle, visible_corners, NoiseConfig};
use roomlayout::layout::*;
use roomlayout::proposal::detect_corners;
use roomlayout::synth::{random_layout, SceneParams, SurfaceConfig};
use roomlayout::{Error, Point};

fn b(fx: f64, fy: f64, cx: f64, cy: f64) -> WwBoundary {
    WwBoundary::new(Point::new(fx, fy), Point::new(cx, cy))
}

fn cuboid() -> Layout {
    Layout::new(100, 100, true, true).with_boundaries(vec![b(30.0, 80.0, 30.0, 20.0), b(70.0, 80.0, 70.0, 20.0)])
}

#[test]
fn validate_cases() {
    assert!(cuboid().validate().is_empty());
    assert_eq!(cuboid().n_walls(), 3);

    let dup =
        Layout::new(100, 100, true, true).with_boundaries(vec![b(30.0, 80.0, 30.0, 20.0), b(30.0, 85.0, 32.0, 20.0)]);
    assert_eq!(dup.validate(), vec![Violation::OrderingViolation { index: 1 }]);

    let inv = Layout::new(100, 100, true, true).with_boundaries(vec![b(30.0, 20.0, 30.0, 80.0)]);
    assert!(inv.validate().contains(&Violation::InvertedBoundary { index: 0 }));
}

#[test]
fn validate_catches_crossing_and_flags() {
    let crossing =
        Layout::new(100, 100, true, true).with_boundaries(vec![b(30.0, 80.0, 60.0, 20.0), b(50.0, 80.0, 40.0, 20.0)]);
    assert_eq!(crossing.validate(), vec![Violation::CrossingBoundaries { index: 1 }]);
    let no_floor = Layout::new(100, 100, true, false).with_boundaries(vec![b(30.0, 80.0, 30.0, 20.0)]);
    assert_eq!(no_floor.validate(), vec![Violation::SurfaceFlagMismatch { index: 0 }]);
    assert_eq!(
        Layout::new(10, 10, false, true).validate(),
        vec![Violation::MissingCorners]
    );
}

#[test]
fn wf_segments_joining_rule() {
    let l =
        Layout::new(100, 100, true, true).with_boundaries(vec![b(30.0, 80.0, 30.0, 20.0), b(70.0, 85.0, 70.0, 20.0)]);
    let segs = l.wf_segments().unwrap();
    assert_eq!(segs.len(), 3);
    assert_eq!(segs[1].a, Point::new(30.0, 80.0));
    assert_eq!(segs[1].b, Point::new(70.0, 85.0));
    // edge connections run to the image sides at the corner heights
    assert_eq!(segs[0].a, Point::new(0.0, 80.0));
    assert_eq!(segs[2].b, Point::new(100.0, 85.0));

    let single = Layout::new(100, 100, true, true).with_boundaries(vec![b(50.0, 80.0, 50.0, 20.0)]);
    assert_eq!(single.wf_segments().unwrap().len(), 2);

    let ceiling_only = Layout::new(100, 100, true, false).with_boundaries(vec![b(50.0, 100.0, 50.0, 20.0)]);
    assert!(matches!(
        ceiling_only.wf_segments(),
        Err(Error::MissingSurface("floor"))
    ));
}

#[test]
fn full_frame_single_wall() {
    let l = Layout::new(40, 30, false, false);
    assert!(l.is_valid());
    assert_eq!(l.n_walls(), 1);
    let m = l.surface_masks().unwrap();
    assert_eq!(m.walls.len(), 1);
    assert_eq!(m.walls[0].count(), 1200);
    assert_eq!(m.floor.count() + m.ceiling.count(), 0);
}

#[test]
fn edge_boundaries_do_not_add_walls() {
    let l = Layout::new(100, 100, true, true).with_boundaries(vec![
        b(0.0, 70.0, 0.0, 25.0),
        b(50.0, 80.0, 50.0, 20.0),
        b(100.0, 75.0, 100.0, 30.0),
    ]);
    assert!(l.is_valid(), "{:?}", l.validate());
    assert_eq!(l.n_walls(), 2);
    assert_eq!(l.ww_segments().len(), 1);
    // the left edge boundary carries the sloped floor of the left wall
    assert_eq!(l.wf_segments().unwrap().len(), 2);
    let m = l.surface_masks().unwrap();
    assert_eq!(m.walls.len(), 2);
    let total = m.floor.count() + m.ceiling.count() + m.walls.iter().map(|w| w.count()).sum::<usize>();
    assert_eq!(total, 100 * 100);

    // a single wall bounded by both edges
    let one =
        Layout::new(100, 100, false, true).with_boundaries(vec![b(0.0, 70.0, 0.0, 0.0), b(100.0, 80.0, 100.0, 0.0)]);
    assert!(one.is_valid(), "{:?}", one.validate());
    assert_eq!(one.n_walls(), 1);
}

#[test]
fn symmetric_cuboid_floor_is_symmetric() {
    let l =
        Layout::new(100, 80, true, true).with_boundaries(vec![b(25.0, 60.0, 27.0, 15.0), b(75.0, 60.0, 73.0, 15.0)]);
    let m = l.surface_masks().unwrap();
    for y in 0..80 {
        for x in 0..50 {
            assert_eq!(m.floor.get(x, y), m.floor.get(99 - x, y), "({x},{y})");
        }
    }
}

#[test]
fn boundary_image_channels() {
    let no_ceiling = Layout::new(100, 100, false, true).with_boundaries(vec![b(50.0, 80.0, 50.0, 0.0)]);
    let img = no_ceiling.render_boundary_image(DEFAULT_STROKE_PX).unwrap();
    assert!(img.0.plane(2).iter().all(|&v| v == 0.0));
    assert!(img.0.plane(0).contains(&1.0));
}

#[test]
fn boundary_image_single_vertical_matches_point_location_oracle() {
    let l = Layout::new(100, 100, false, false).with_boundaries(vec![b(50.0, 100.0, 50.0, 0.0)]);
    let img = l.render_boundary_image(1).unwrap();
    // oracle: for every row, the pixel containing the line point at that row's center
    let mut expected = vec![0.0f32; 100 * 100];
    for row in 0..100 {
        let x_line = 50.0f64;
        expected[row * 100 + x_line.floor() as usize] = 1.0;
    }
    assert_eq!(img.0.plane(0), &expected[..]);
}

#[test]
fn json_field_order_and_round_trip() {
    let l = cuboid();
    let text = l.to_json();
    let pos = |k: &str| text.find(k).unwrap();
    assert!(pos("image_width") < pos("image_height"));
    assert!(pos("image_height") < pos("has_ceiling"));
    assert!(pos("has_ceiling") < pos("has_floor"));
    assert!(pos("has_floor") < pos("boundaries"));
    assert!(pos("\"fx\"") < pos("\"fy\"") && pos("\"cy\"") < pos("floor_visible"));
    assert_eq!(Layout::from_json(&text).unwrap(), l);
    assert!(Layout::from_json("{\"image_width\": 3}").is_err());
}

fn random_room(seed: u64, walls: usize, cfg: usize) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_layout(&mut rng, &SceneParams::default(), walls, SurfaceConfig::ALL[cfg]).unwrap()
}

#[test]
fn oracle_corners_come_back_within_a_pixel_and_a_half() {
    for seed in 0..10 {
        let l = random_room(seed, 2 + seed as usize % 4, 0);
        let maps = render_oracle(&l, &NoiseConfig::noiseless()).unwrap();
        let (found_f, found_c) = detect_corners(&maps, &Default::default());
        let (want_f, want_c) = visible_corners(&l);
        for (want, found) in [(want_f, found_f), (want_c, found_c)] {
            assert_eq!(want.len(), found.len(), "seed {seed}");
            for p in want {
                let d = found.iter().map(|q| q.dist(p)).fold(f64::INFINITY, f64::min);
                assert!(d <= 1.5, "seed {seed}: corner {p:?} off by {d}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn surfaces_partition_the_image(seed in 0u64..100_000, walls in 1usize..=6, cfg in 0usize..4) {
        let l = random_room(seed, walls, cfg);
        let m = l.surface_masks().unwrap();
        let (w, h) = (l.image_width, l.image_height);
        for y in 0..h {
            for x in 0..w {
                let hits = usize::from(m.floor.get(x, y))
                    + usize::from(m.ceiling.get(x, y))
                    + m.walls.iter().filter(|wall| wall.get(x, y)).count();
                prop_assert_eq!(hits, 1, "pixel ({}, {})", x, y);
            }
        }
        prop_assert_eq!(m.walls.len(), l.n_walls());
    }

    #[test]
    fn floor_segment_count(seed in 0u64..100_000, walls in 1usize..=6) {
        let l = random_room(seed, walls, 2);
        let n = l.boundaries.len();
        let xs: Vec<f64> = l.boundaries.iter().map(|b| b.floor.x).collect();
        let edges = usize::from(xs[0] > EDGE_TOL) + usize::from(xs[n - 1] < l.width_f() - EDGE_TOL);
        prop_assert_eq!(l.wf_segments().unwrap().len(), n.saturating_sub(1) + edges);
    }
}
