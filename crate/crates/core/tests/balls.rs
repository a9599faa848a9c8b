use ccperim::acceptance::step_radii;
use ccperim::balls::*;
use std::sync::Arc;

use ccperim::contact::{ContactStructure, MetricField, Point};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn lattice(eps: f64, radius: f64, dirs: Directions) -> HorizontalLattice {
    HorizontalLattice::for_radius(ContactStructure::standard(1).unwrap(), eps, radius, dirs).unwrap()
}

fn pt(x: f64, y: f64, t: f64) -> Point {
    Point::new(vec![x, y], t).unwrap()
}

#[test]
fn distance_is_symmetric_up_to_snapping() {
    for dirs in [Directions::Four, Directions::Eight] {
        let l = lattice(1.0 / 16.0, 1.0, dirs);
        let (p, q) = (pt(0.1, -0.2, 0.05), pt(-0.3, 0.25, -0.1));
        let d1 = l.cc_distance(&p, &q).unwrap();
        let d2 = l.cc_distance(&q, &p).unwrap();
        assert!((d1 - d2).abs() <= 2.0 / 16.0, "{d1} {d2}");
        assert_eq!(l.cc_distance(&p, &p).unwrap(), 0.0);
    }
}

#[test]
fn horizontal_segment_length() {
    let eps = 1.0 / 32.0;
    let l = lattice(eps, 1.0, Directions::Four);
    for x in [0.25, 0.5, 0.75] {
        let d = l.cc_distance(&Point::origin(1), &pt(x, 0.0, 0.0)).unwrap();
        assert!((d - x).abs() <= 0.05 * x);
    }
}

#[test]
fn hop_store_matches_dijkstra() {
    let l = lattice(1.0 / 16.0, 0.6, Directions::Four);
    let field = l.distance_field(&Point::origin(1), 0.5).unwrap();
    let nodes = field.nodes_within(0.5).unwrap();
    assert!(nodes.len() > 100);
    for q in nodes.iter().step_by(nodes.len() / 40) {
        let bfs = field.distance_to(q).unwrap();
        let dijkstra = l.cc_distance(&Point::origin(1), q).unwrap();
        assert!((bfs - dijkstra).abs() < 1e-12, "{q:?}: {bfs} vs {dijkstra}");
    }
}

#[test]
fn translated_balls_have_equal_volume() {
    let l = lattice(1.0 / 16.0, 0.5, Directions::Four);
    let v0 = l.ball_volume(&Point::origin(1), 0.5).unwrap();
    let v1 = l.ball_volume(&pt(0.75, -0.5, 0.375), 0.5).unwrap();
    assert_eq!(v0, v1);
}

#[test]
fn volume_is_monotone_and_dilation_covariant() {
    let eps = 1.0 / 32.0;
    let l = lattice(eps, 1.0, Directions::Four);
    let field = l.distance_field(&Point::origin(1), 1.0).unwrap();
    let radii = step_radii(0.1, 1.0, eps, 12);
    let vols: Vec<f64> = radii.iter().map(|r| field.ball_volume(*r).unwrap()).collect();
    assert!(vols.windows(2).all(|w| w[0] <= w[1]));
    let ratio = field.ball_volume(1.0).unwrap() / field.ball_volume(0.5).unwrap();
    assert!((ratio / 16.0 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn ahlfors_exponent_is_stable_under_refinement() {
    let slope = |eps: f64| {
        let l = lattice(eps, 1.0, Directions::Four);
        let field = l.distance_field(&Point::origin(1), 1.0).unwrap();
        let radii = step_radii(0.2, 1.0, eps, 8);
        let vols: Vec<f64> = radii.iter().map(|r| field.ball_volume(*r).unwrap()).collect();
        ahlfors_fit(&radii, &vols).0
    };
    let (a, b) = (slope(1.0 / 32.0), slope(1.0 / 64.0));
    assert!((b - 4.0).abs() <= 0.1, "{b}");
    assert!((a - b).abs() <= 0.05, "{a} {b}");
}

#[test]
fn doubling_ratio_bounds() {
    let l = lattice(1.0 / 32.0, 1.0, Directions::Four);
    for r in [0.125, 0.25, 0.5] {
        let d = l.doubling_ratio(&Point::origin(1), r).unwrap();
        assert!((1.0..=20.0).contains(&d), "r={r}: {d}");
    }
}

#[test]
fn eight_directions_shrink_distances() {
    let (four, eight) = (lattice(1.0 / 16.0, 1.0, Directions::Four), lattice(1.0 / 16.0, 1.0, Directions::Eight));
    let q = pt(0.5, 0.5, 0.0);
    assert!(eight.cc_distance(&Point::origin(1), &q).unwrap() < four.cc_distance(&Point::origin(1), &q).unwrap());
}

#[test]
fn homogeneity_constant_is_positive() {
    let l = lattice(1.0 / 16.0, 1.5, Directions::Four);
    let samples = vec![(pt(0.125, 0.0, 0.0), 0.5), (pt(0.0, -0.1875, 0.0), 0.75), (Point::origin(1), 0.25)];
    let c = homogeneity_constant(&l, &Point::origin(1), 0.25, &samples).unwrap();
    assert!(c > 0.0 && c.is_finite());
    assert!(homogeneity_constant(&l, &Point::origin(1), 0.25, &[(Point::origin(1), 0.125)]).is_err());
}

struct Bumpy;

impl MetricField for Bumpy {
    fn matrix(&self, z: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * (1.0 + 0.5 * z[0] * z[0])
    }
}

#[test]
fn varying_metric_balls_and_clipping() {
    let s = ContactStructure::with_field(1, Arc::new(Bumpy)).unwrap();
    assert!(!s.is_left_invariant());
    let l = HorizontalLattice::new(s, 1.0 / 16.0, 0.5, 0.5, Directions::Four).unwrap();
    let v = l.ball_volume(&Point::origin(1), 0.25).unwrap();
    let flat = lattice(1.0 / 16.0, 0.5, Directions::Four).ball_volume(&Point::origin(1), 0.25).unwrap();
    assert!(v > 0.0 && v <= flat);
    assert!(matches!(l.ball_volume(&Point::origin(1), 1.0), Err(ccperim::Error::BallClipped { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn triangle_inequality(
        a in prop::array::uniform3(-0.3..0.3f64),
        b in prop::array::uniform3(-0.3..0.3f64),
        c in prop::array::uniform3(-0.3..0.3f64),
    ) {
        let eps = 1.0 / 16.0;
        let l = lattice(eps, 1.0, Directions::Four);
        let (p, q, r) = (pt(a[0], a[1], a[2]), pt(b[0], b[1], b[2]), pt(c[0], c[1], c[2]));
        let pq = l.cc_distance(&p, &q).unwrap();
        let qr = l.cc_distance(&q, &r).unwrap();
        let pr = l.cc_distance(&p, &r).unwrap();
        prop_assert!(pr <= pq + qr + 3.0 * eps, "{pr} > {pq} + {qr}");
    }
}
