use roomlayout::geometry::*;
use roomlayout::Error;

use proptest::prelude::*;

type P = Point2<f64>;

fn p(x: f64, y: f64) -> P {
    P::new(x, y)
}

fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> LineSegment<f64> {
    LineSegment::new(p(ax, ay), p(bx, by)).unwrap()
}

fn same_segment(s: &LineSegment<f64>, a: P, b: P, tol: f64) -> bool {
    (s.a.dist(a) < tol && s.b.dist(b) < tol) || (s.a.dist(b) < tol && s.b.dist(a) < tol)
}

#[test]
fn fit_two_points_is_identity() {
    let s = fit_segment(&[p(0.0, 0.0), p(0.0, 10.0)]).unwrap();
    assert!(same_segment(&s, p(0.0, 0.0), p(0.0, 10.0), 1e-12));
}

#[test]
fn fit_symmetric_cross() {
    // scatter: sxx = 50, syy = 2, sxy = 0 -> principal axis is x
    let s = fit_segment(&[p(0.0, 0.0), p(10.0, 0.0), p(5.0, 1.0), p(5.0, -1.0)]).unwrap();
    assert!(same_segment(&s, p(0.0, 0.0), p(10.0, 0.0), 1e-9), "{s:?}");
}

#[test]
fn fit_rejects_degenerate() {
    assert!(matches!(fit_segment(&[p(3.0, 3.0)]), Err(Error::DegenerateInput(_))));
    assert!(matches!(
        fit_segment(&[p(3.0, 3.0), p(3.0, 3.0), p(3.0, 3.0)]),
        Err(Error::DegenerateInput(_))
    ));
}

#[test]
fn fit_works_in_f32() {
    let pts = [Point2::new(1.0f32, 2.0), Point2::new(3.0, 6.0), Point2::new(2.0, 4.0)];
    let s = fit_segment(&pts).unwrap();
    assert!((s.length() - 20f32.sqrt()).abs() < 1e-4);
}

#[test]
fn intersect_cases() {
    let x_axis = seg(0.0, 0.0, 1.0, 0.0);
    let y_axis = seg(0.0, 0.0, 0.0, 1.0);
    let q = intersect(&x_axis, &y_axis).unwrap();
    assert!(q.dist(p(0.0, 0.0)) < 1e-12);
    assert!(intersect(&seg(0.0, 0.0, 1.0, 0.0), &seg(0.0, 1.0, 5.0, 1.0)).is_none());
    // y = x and y = 2 - x: x = 2 - x -> x = 1
    let q = intersect(&seg(0.0, 0.0, 3.0, 3.0), &seg(0.0, 2.0, 2.0, 0.0)).unwrap();
    assert!(q.dist(p(1.0, 1.0)) < 1e-12);
}

#[test]
fn angle_to_cases() {
    assert!(angle_to(&seg(0.0, 0.0, 0.0, 10.0), p(0.0, -1000.0)).abs() < 1e-12);
    let a = angle_to(&seg(0.0, 0.0, 10.0, 0.0), p(5.0, -7.0));
    assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    // midpoint (0.5, 0.5); to p: (9.5, -0.5); direction (1, 1)
    let oracle = {
        let t1 = 1f64.atan2(1.0);
        let t2 = (-0.5f64).atan2(9.5);
        let mut d = (t1 - t2).abs() % std::f64::consts::PI;
        if d > std::f64::consts::FRAC_PI_2 {
            d = std::f64::consts::PI - d;
        }
        d
    };
    let a = angle_to(&seg(0.0, 0.0, 1.0, 1.0), p(10.0, 0.0));
    assert!((a - oracle).abs() < 1e-12, "{a} vs {oracle}");
}

#[test]
fn rasterize_rectangle_and_full_image() {
    let rect = [p(0.0, 0.0), p(4.0, 0.0), p(4.0, 4.0), p(0.0, 4.0)];
    let m = rasterize_polygon(&rect, 8, 8).unwrap();
    let brute = (0..64)
        .filter(|k| {
            let (cx, cy) = ((k % 8) as f64 + 0.5, (k / 8) as f64 + 0.5);
            cx < 4.0 && cy < 4.0
        })
        .count();
    assert_eq!(brute, 16);
    assert_eq!(m.count(), 16);
    let full = [p(0.0, 0.0), p(8.0, 0.0), p(8.0, 6.0), p(0.0, 6.0)];
    assert_eq!(rasterize_polygon(&full, 8, 6).unwrap().count(), 48);
}

#[test]
fn rasterize_rejects_degenerate() {
    assert!(rasterize_polygon(&[p(0.0, 0.0), p(1.0, 1.0)], 4, 4).is_err());
    let flat = [p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)];
    assert!(matches!(rasterize_polygon(&flat, 4, 4), Err(Error::DegenerateInput(_))));
}

#[test]
fn rasterize_clips_outside() {
    let big = [p(-5.0, -5.0), p(20.0, -5.0), p(20.0, 20.0), p(-5.0, 20.0)];
    assert_eq!(rasterize_polygon(&big, 7, 5).unwrap().count(), 35);
}

#[test]
fn stroke_vertical_one_pixel() {
    let s = seg(50.0, 10.0, 50.0, 90.0);
    let mut hits = Vec::new();
    stroke_segment(&s, 1, 100, 100, |x, y| hits.push((x, y)));
    // rows with centers in [10, 90] -> rows 10..=89, all in the pixel containing x = 50
    assert_eq!(hits.len(), 80);
    assert!(hits.iter().all(|&(x, _)| x == 50));
}

fn point_in_polygon(poly: &[P], q: P) -> bool {
    // ray casting to +x
    let mut inside = false;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        if (a.y > q.y) != (b.y > q.y) {
            let x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if q.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn star_polygon(angles: Vec<f64>, radii: Vec<f64>, cx: f64, cy: f64) -> Vec<P> {
    let mut a = angles;
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a.iter()
        .zip(radii)
        .map(|(&t, r)| p(cx + r * t.cos(), cy + r * t.sin()))
        .collect()
}

proptest! {
    #[test]
    fn rasterize_matches_point_in_polygon(
        n in 3usize..=8,
        seed_angles in proptest::collection::vec(0.0f64..std::f64::consts::TAU, 8),
        radii in proptest::collection::vec(1.0f64..9.0, 8),
        cx in 4.0f64..12.0,
        cy in 4.0f64..12.0,
    ) {
        // star-shaped polygons around (cx, cy) are simple
        let poly = star_polygon(seed_angles[..n].to_vec(), radii[..n].to_vec(), cx, cy);
        let Ok(mask) = rasterize_polygon(&poly, 16, 16) else { return Ok(()); };
        for y in 0..16 {
            for x in 0..16 {
                let q = p(x as f64 + 0.5, y as f64 + 0.5);
                // skip centers numerically on an edge; the two rules may legitimately differ
                let on_edge = (0..poly.len()).any(|i| {
                    LineSegment::new(poly[i], poly[(i + 1) % poly.len()])
                        .map(|s| s.distance_to_point(q) < 1e-9)
                        .unwrap_or(true)
                });
                if !on_edge {
                    prop_assert_eq!(mask.get(x, y), point_in_polygon(&poly, q));
                }
            }
        }
    }

    #[test]
    fn fit_is_rotation_invariant(
        pts in proptest::collection::vec((-20.0f64..20.0, -3.0f64..3.0), 3..20),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let pts: Vec<P> = pts.into_iter().map(|(x, y)| p(x * 2.0, y)).collect();
        let Ok(s) = fit_segment(&pts) else { return Ok(()); };
        let (c, sn) = (angle.cos(), angle.sin());
        let rot = |q: P| p(c * q.x - sn * q.y, sn * q.x + c * q.y);
        let rotated: Vec<P> = pts.iter().map(|&q| rot(q)).collect();
        let r = fit_segment(&rotated).unwrap();
        prop_assert!(same_segment(&r, rot(s.a), rot(s.b), 1e-6));
    }

    #[test]
    fn intersect_is_symmetric(
        a in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
        b in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
    ) {
        let (Ok(s1), Ok(s2)) = (
            LineSegment::new(p(a.0, a.1), p(a.2, a.3)),
            LineSegment::new(p(b.0, b.1), p(b.2, b.3)),
        ) else { return Ok(()); };
        match (intersect(&s1, &s2), intersect(&s2, &s1)) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                let scale = 1.0 + x.norm();
                prop_assert!(x.dist(y) <= 1e-6 * scale);
            }
            other => prop_assert!(false, "asymmetric: {:?}", other),
        }
    }
}
