use std::f64::consts::PI;

use ccperim::contact::{dilate, Point};
use ccperim::numerics::integrate;
use ccperim::pansu::*;
use proptest::prelude::*;

#[test]
fn profile_values() {
    assert!((profile(1.0, 0.0).unwrap() - PI / 4.0).abs() < 1e-15);
    assert_eq!(profile(1.0, 1.0).unwrap(), 0.0);
    // ½(r√(1−r²) + arccos r) at r = ½
    let direct = 0.5 * (0.5 * 0.75f64.sqrt() + 0.5f64.acos());
    assert!((profile(1.0, 0.5).unwrap() - direct).abs() < 1e-15);
    assert!((profile(1.0, 0.5).unwrap() - 0.740105).abs() < 1e-6);
    assert!(profile(1.0, 1.5).is_err());
    assert!(profile(0.0, 0.5).is_err());
}

#[test]
fn radial_derivative() {
    let d = profile_derivative(1.0, 0.5).unwrap();
    assert!((d + 0.25 / 0.75f64.sqrt()).abs() < 1e-14);
    let k = 1e-5;
    let fd = (profile(1.0, 0.5 + k).unwrap() - profile(1.0, 0.5 - k).unwrap()) / (2.0 * k);
    assert!((d - fd).abs() < 1e-8);
    assert!(profile_derivative(1.0, 1e-9).unwrap().abs() < 1e-15);
}

#[test]
fn hessian_is_linear_in_r_near_the_pole() {
    let bound = |rmax: f64, samples: usize| {
        (1..=samples)
            .map(|i| {
                let r = rmax * i as f64 / samples as f64;
                let h = profile_hessian(1.0, &[r * 0.6, r * 0.8]).unwrap();
                h.iter().fold(0.0f64, |m, v| m.max(v.abs())) / r
            })
            .fold(0.0, f64::max)
    };
    let (c1, c2) = (bound(0.1, 50), bound(0.1, 100));
    assert!(c1.is_finite() && (c1 - c2).abs() < 0.05 * c1, "{c1} {c2}");
}

#[test]
fn analytic_and_finite_difference_residuals() {
    assert!(cmc_residual(1.0, &[0.5, 0.0], CurvatureMode::Analytic).unwrap() <= 1e-3);
    assert!(cmc_residual(2.0, &[0.0, 0.25], CurvatureMode::Analytic).unwrap() <= 2e-3);
    let fd = cmc_residual(1.0, &[0.3, 0.4], CurvatureMode::FiniteDifference { h: 1.0 / 256.0 }).unwrap();
    assert!(fd < 1e-2, "{fd}");
    assert!(cmc_residual(1.0, &[0.99, 0.0], CurvatureMode::Analytic).is_err());
}

#[test]
fn foliation_of_space_by_spheres() {
    let pole = Point::new(vec![0.0, 0.0], PI / 4.0).unwrap();
    assert!((foliation_lambda(&pole).unwrap() - 1.0).abs() < 1e-10);
    let equator = Point::new(vec![1.0, 0.0], 0.0).unwrap();
    assert!((foliation_lambda(&equator).unwrap() - 1.0).abs() < 1e-10);
    assert!(foliation_lambda(&Point::origin(1)).is_err());
}

#[test]
fn sphere_oracles() {
    let area = 4.0 * PI * integrate(|th: f64| th.sin().powi(2), 0.0, PI / 2.0, 1e-13);
    let volume = 4.0 * PI * integrate(|r| profile(1.0, r).unwrap() * r, 0.0, 1.0, 1e-13);
    assert!((sphere_area(1.0, 1).unwrap() - area).abs() < 1e-9);
    assert!((sphere_volume(1.0, 1).unwrap() - volume).abs() < 1e-9);
    assert!((area - PI * PI).abs() < 1e-10 && (volume - 3.0 * PI * PI / 8.0).abs() < 1e-10);
    // isoperimetric ratio of the sphere: π²/(3π²/8)^{3/4}
    let ratio = sphere_area(1.0, 1).unwrap() / sphere_volume(1.0, 1).unwrap().powf(0.75);
    assert!((ratio - 3.6987).abs() < 1e-4);
}

#[test]
fn sphere_membership() {
    let s = PansuSphere::new(1.0, Point::new(vec![2.0, -1.0], 0.5).unwrap()).unwrap();
    assert!(s.contains(&Point::new(vec![2.0, -1.0], 0.5).unwrap()));
    assert!(!s.contains(&Point::origin(1)));
    assert!((s.pole_height() - PI / 4.0).abs() < 1e-15);
}

#[test]
fn enlarging_a_ball_inside_itself_adds_nothing() {
    use ccperim::contact::ContactStructure;
    use ccperim::perimeter::{Grid, VoxelSet, DEFAULT_SIGMA};
    let s = ContactStructure::standard(1).unwrap();
    let grid = Grid::around(1, 1.2, 1.0, 1.0 / 16.0, DEFAULT_SIGMA).unwrap();
    let e = VoxelSet::pansu_ball(grid, &PansuSphere::centered(1.0, 1).unwrap());
    let r = deform_enlarge(&e, &Point::origin(1), 0.5, DEFAULT_SIGMA, &s);
    assert!(matches!(r, Err(ccperim::Error::NoVolumeAdded)));
    let grown = deform_enlarge(&e, &Point::origin(1), 1.1, DEFAULT_SIGMA, &s).unwrap();
    assert!(grown.added_volume > 0.0 && grown.ratio().is_finite());
}

proptest! {
    #[test]
    fn profile_is_strictly_decreasing(lambda in 0.2..5.0f64, a in 0.001..0.998f64, d in 0.0005..0.001f64) {
        let r1 = a / lambda;
        let r2 = (a + d) / lambda;
        prop_assert!(profile(lambda, r2).unwrap() < profile(lambda, r1).unwrap());
    }

    #[test]
    fn dilation_transport(lambda in 0.1..10.0f64, s in 0.0..1.0f64) {
        let r = s / lambda;
        let lhs = profile(lambda, r).unwrap();
        let rhs = profile(1.0, lambda * r).unwrap() / (lambda * lambda);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn spheres_are_nested(l1 in 0.2..5.0f64, k in 1.01..3.0f64, s in 0.0..0.999f64) {
        let l2 = l1 * k;
        let r = s / l2;
        prop_assert!(profile(l2, r).unwrap() < profile(l1, r).unwrap());
    }

    #[test]
    fn every_point_lies_on_one_leaf(x in -2.0..2.0f64, y in -2.0..2.0f64, t in -2.0..2.0f64) {
        // on the equator t = 0 the height is infinitely sensitive to λ
        prop_assume!(t.abs() > 1e-3);
        let p = Point::new(vec![x, y], t).unwrap();
        let l = foliation_lambda(&p).unwrap();
        prop_assert!(l > 0.0);
        prop_assert!((profile(l, p.radius()).unwrap() - t.abs()).abs() <= 1e-10);
        // the dilated point lies on the dilated leaf
        let q = dilate(2.0, &p).unwrap();
        prop_assert!((foliation_lambda(&q).unwrap() - l / 2.0).abs() <= 1e-8 * l);
    }

    #[test]
    fn ratio_is_dilation_invariant(lambda in 0.25..4.0f64) {
        let a = sphere_area(lambda, 1).unwrap();
        let v = sphere_volume(lambda, 1).unwrap();
        prop_assert!((a * lambda.powi(3) / (PI * PI) - 1.0).abs() < 1e-3);
        prop_assert!((v * lambda.powi(4) / (3.0 * PI * PI / 8.0) - 1.0).abs() < 1e-3);
        prop_assert!((a / v.powf(0.75) / (PI * PI / (3.0 * PI * PI / 8.0f64).powf(0.75)) - 1.0).abs() < 2e-3);
    }
}
