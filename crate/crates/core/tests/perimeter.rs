use std::f64::consts::PI;
use std::sync::Arc;

use ccperim::balls::{Directions, HorizontalLattice};
use ccperim::contact::{ContactStructure, Point};
use ccperim::graph::{self, Domain, GraphFunction, HeightFunction};
use ccperim::pansu::PansuSphere;
use ccperim::perimeter::*;
use proptest::prelude::*;

const SIGMA: usize = DEFAULT_SIGMA;

fn standard() -> ContactStructure {
    ContactStructure::standard(1).unwrap()
}

fn pansu_ball(h: f64) -> VoxelSet {
    let grid = Grid::around(1, 1.0, PI / 4.0, h, SIGMA).unwrap();
    VoxelSet::pansu_ball(grid, &PansuSphere::centered(1.0, 1).unwrap())
}

#[test]
fn cube_volume_counts_voxels() {
    let h = 1.0 / 64.0;
    let grid = Grid::around(1, 0.5, 0.5, h, SIGMA).unwrap();
    let cube = VoxelSet::from_fn(grid, |z, t| z[0].abs() <= 0.5 && z[1].abs() <= 0.5 && t.abs() <= 0.5);
    assert!((cube.volume() - 1.0).abs() <= 6.0 * h);
    assert_eq!(cube.riemannian_volume(&standard()).unwrap(), cube.volume());
}

#[test]
fn dilation_scales_volume_by_sixteen() {
    let e = pansu_ball(1.0 / 32.0);
    let big = e.dilate(2.0).unwrap();
    assert!((big.volume() / e.volume() / 16.0 - 1.0).abs() < 0.02);
    let s = standard();
    let ratio = bv_perimeter(&big, SIGMA, &s).unwrap() / bv_perimeter(&e, SIGMA, &s).unwrap();
    assert!((ratio / 8.0 - 1.0).abs() < 0.03, "{ratio}");
}

#[test]
fn pansu_ball_perimeter() {
    let p = bv_perimeter(&pansu_ball(1.0 / 64.0), SIGMA, &standard()).unwrap();
    assert!((p / (PI * PI) - 1.0).abs() < 0.05, "{p}");
}

#[test]
fn cylinder_perimeter() {
    let (r, t) = (0.6, 0.4);
    let grid = Grid::around(1, r, t, 1.0 / 128.0, SIGMA).unwrap();
    let cyl = VoxelSet::from_fn(grid, |z, tt| z[0].hypot(z[1]) <= r && tt.abs() <= t);
    // lateral wall 2πR·2T, and each flat disk contributes ∫|z| = 2πR³/3
    let oracle = 4.0 * PI * r * t + 4.0 * PI * r.powi(3) / 3.0;
    let p = bv_perimeter(&cyl, SIGMA, &standard()).unwrap();
    assert!((p / oracle - 1.0).abs() < 0.05, "{p} vs {oracle}");
}

#[test]
fn graph_bounded_set_matches_graph_areas() {
    let s = standard();
    let (r, depth) = (0.6, 0.3);
    let top = |z: &[f64]| 0.3 + 0.2 * z[0];
    let disk = Domain::disk(vec![0.0, 0.0], r).unwrap();
    let f: Arc<dyn HeightFunction> = Arc::new(top);
    let upper = graph::area(&GraphFunction::from_analytic(disk.clone(), 1.0 / 256.0, f).unwrap(), &s).unwrap();
    let g: Arc<dyn HeightFunction> = Arc::new(move |_: &[f64]| -depth);
    let lower = graph::area(&GraphFunction::from_analytic(disk, 1.0 / 256.0, g).unwrap(), &s).unwrap();
    // vertical wall over the circle: ∫ (top − bottom) ds
    let oracle = upper + lower + 2.0 * PI * r * (0.3 + depth);
    let err = |h: f64| {
        let grid = Grid::around(1, r, 0.45, h, SIGMA).unwrap();
        let e = VoxelSet::from_fn(grid, |z, t| z[0].hypot(z[1]) <= r && t >= -depth && t <= top(z));
        (bv_perimeter(&e, SIGMA, &s).unwrap() / oracle - 1.0).abs()
    };
    // the two circular edges are rounded off over the mollifier width, an O(σh) loss
    let (coarse, fine) = (err(1.0 / 64.0), err(1.0 / 128.0));
    assert!(fine < coarse && fine < 0.05, "{coarse} {fine}");
}

#[test]
fn complement_has_the_same_perimeter() {
    let s = standard();
    let e = &random_family(7, 1, &Grid::around(1, 1.0, 0.5, 1.0 / 16.0, SIGMA).unwrap())[0];
    let p = bv_perimeter(e, SIGMA, &s).unwrap();
    let pc = bv_perimeter(&e.complement(), SIGMA, &s).unwrap();
    assert!((p - pc).abs() <= 1e-10 * p, "{p} vs {pc}");
}

#[test]
fn submodularity_on_random_pairs() {
    let s = standard();
    let grid = Grid::around(1, 1.0, 0.5, 1.0 / 16.0, SIGMA).unwrap();
    let family = random_family(11, 10, &grid);
    for pair in family.chunks(2) {
        let (e, f) = (&pair[0], &pair[1]);
        let lhs = bv_perimeter(&e.union(f).unwrap(), SIGMA, &s).unwrap()
            + bv_perimeter(&e.intersection(f).unwrap(), SIGMA, &s).unwrap();
        let rhs = bv_perimeter(e, SIGMA, &s).unwrap() + bv_perimeter(f, SIGMA, &s).unwrap();
        assert!(lhs <= 1.03 * rhs, "{lhs} > {rhs}");
    }
}

#[test]
fn mollifier_radius_is_validated() {
    assert!(matches!(bv_perimeter(&pansu_ball(1.0 / 16.0), 1, &standard()), Err(ccperim::Error::MollifierTooSmall { sigma: 1 })));
}

#[test]
fn voxel_file_round_trip() {
    let e = &random_family(3, 1, &Grid::around(1, 1.0, 0.5, 1.0 / 16.0, SIGMA).unwrap())[0];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.vox");
    e.save(&path).unwrap();
    let back = VoxelSet::load(&path).unwrap();
    assert_eq!(back.occupancy(), e.occupancy());
    assert_eq!(back.grid().dims(), e.grid().dims());
    std::fs::write(&path, "garbage").unwrap();
    assert!(VoxelSet::load(&path).is_err());
}

#[test]
fn pansu_ball_beats_the_cube() {
    let s = standard();
    let ball = small_volume_ratio(&pansu_ball(1.0 / 64.0), SIGMA, &s).unwrap();
    let oracle = PI * PI / (3.0 * PI * PI / 8.0f64).powf(0.75);
    assert!((ball / oracle - 1.0).abs() < 0.01, "{ball}");
    let grid = Grid::around(1, 0.5, 0.5, 1.0 / 64.0, SIGMA).unwrap();
    let cube = VoxelSet::from_fn(grid, |z, t| z[0].abs() <= 0.5 && z[1].abs() <= 0.5 && t.abs() <= 0.5);
    assert!(small_volume_ratio(&cube, SIGMA, &s).unwrap() > ball);
}

#[test]
fn small_volume_ratio_is_scale_free() {
    let s = standard();
    let a = small_volume_ratio(&pansu_ball(1.0 / 32.0), SIGMA, &s).unwrap();
    let b = small_volume_ratio(&pansu_ball(1.0 / 32.0).dilate(0.5).unwrap(), SIGMA, &s).unwrap();
    assert!((a / b - 1.0).abs() < 0.01, "{a} {b}");
}

fn half_space_ratio(eta: f64) -> f64 {
    let s = standard();
    let (x, r) = (Point::origin(1), 0.5);
    let grid = Grid::for_ball(&x, r, eta, 0.25, SIGMA).unwrap();
    let lattice = HorizontalLattice::for_radius(s, r * eta / 2.0, r, Directions::Four).unwrap();
    let e = VoxelSet::from_fn(grid, |_, t| t < 0.0);
    relative_isoperimetric_ratio(&e, &x, r, &lattice, SIGMA).unwrap().ratio
}

#[test]
fn relative_ratio_of_a_half_space() {
    let (a, b) = (half_space_ratio(1.0 / 16.0), half_space_ratio(1.0 / 32.0));
    assert!(a > 0.0 && b.is_finite());
    assert!((a / b - 1.0).abs() < 0.1, "{a} {b}");
}

#[test]
fn relative_ratio_rejects_a_full_ball() {
    let s = standard();
    let (x, r, eta) = (Point::origin(1), 0.5, 1.0 / 16.0);
    let grid = Grid::for_ball(&x, r, eta, 0.25, SIGMA).unwrap();
    let lattice = HorizontalLattice::for_radius(s, r * eta / 2.0, r, Directions::Four).unwrap();
    let full = VoxelSet::from_fn(grid, |_, _| true);
    assert!(matches!(relative_isoperimetric_ratio(&full, &x, r, &lattice, SIGMA), Err(ccperim::Error::Degenerate(_))));
}

#[test]
fn lr_ratio_checks_its_hypothesis() {
    let s = standard();
    let e = pansu_ball(1.0 / 16.0).dilate(0.25).unwrap();
    let lattice = HorizontalLattice::for_radius(s, 1.0 / 16.0, 1.0, Directions::Four).unwrap();
    let m = 1.05 * e.volume();
    assert!(matches!(lr_ratio(&e, m, 0.125, &lattice, 2, SIGMA), Err(ccperim::Error::HypothesisViolated(_))));
    let ok = lr_ratio(&e, m, 1.0, &lattice, 2, SIGMA).unwrap();
    assert!(ok.ratio > 0.0 && ok.max_local_volume < m && m < ok.ball_volume / 2.0);
}

#[test]
fn upper_profile_is_a_power_law() {
    let upper = UpperProfile::new(standard(), 1.0 / 16.0, 16, SIGMA).unwrap();
    let scaled: Vec<f64> = [0.01, 0.1, 1.0].iter().map(|v| profile_upper(*v, &upper).unwrap() / v.powf(0.75)).collect();
    let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    assert!(spread < 0.02, "{scaled:?}");
}

#[test]
fn poincare_ratio_of_simple_functions() {
    let s = standard();
    let at = |eps: f64, f: &(dyn Fn(&Point) -> f64 + Sync)| {
        let l = HorizontalLattice::for_radius(s.clone(), eps, 0.4, Directions::Four).unwrap();
        poincare_ratio(f, &Point::origin(1), 0.4, &l).unwrap()
    };
    assert_eq!(at(1.0 / 32.0, &|_| 3.0), 0.0);
    let (a, b) = (at(1.0 / 32.0, &|p| p.z[0]), at(1.0 / 64.0, &|p| p.z[0]));
    assert!(a > 0.0 && (a / b - 1.0).abs() < 0.1, "{a} {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn dilation_covariance_on_random_sets(seed in 0u64..1000) {
        let s = standard();
        let grid = Grid::around(1, 1.0, 0.5, 1.0 / 16.0, SIGMA).unwrap();
        let e = random_family(seed, 1, &grid).remove(0);
        let big = e.dilate(2.0).unwrap();
        let pv = bv_perimeter(&e, SIGMA, &s).unwrap();
        prop_assert!((big.volume() / e.volume() / 16.0 - 1.0).abs() < 0.02);
        prop_assert!((bv_perimeter(&big, SIGMA, &s).unwrap() / pv / 8.0 - 1.0).abs() < 0.03);
    }
}
