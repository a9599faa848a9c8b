use std::f64::consts::PI;

use ccperim::optimizer::*;
use ccperim::pansu;
use ccperim::Error;
use proptest::prelude::*;

const V1: f64 = 3.0 * PI * PI / 8.0;

#[test]
fn reduced_functionals_on_the_pansu_profile() {
    let u = AxiProfile::pansu(1.0, 512).unwrap();
    assert!((axi_perimeter(&u) / (PI * PI) - 1.0).abs() < 1e-3);
    assert!((axi_volume(&u) / V1 - 1.0).abs() < 1e-3);
    let u2 = AxiProfile::pansu(2.0, 512).unwrap();
    assert!((axi_perimeter(&u2) / (PI * PI / 8.0) - 1.0).abs() < 1e-3);
    let zero = AxiProfile::from_fn(1.0, 64, |_| 0.0).unwrap();
    assert_eq!((axi_perimeter(&zero), axi_volume(&zero)), (0.0, 0.0));
}

#[test]
fn reduction_agrees_with_the_two_dimensional_area() {
    assert!(ensure_reduction_validated().unwrap() <= REDUCTION_TOLERANCE);
}

#[test]
fn cap_start_converges_to_the_pansu_sphere() {
    let cfg = OptimizerConfig::default();
    let (prof, trace) = optimize_traced(V1, &cfg).unwrap();
    let p = axi_perimeter(&prof);
    assert!(p <= 1.02 * PI * PI, "{p}");
    let u0 = pansu::profile(1.0, 0.0).unwrap();
    let dev = prof
        .radii()
        .iter()
        .zip(&prof.u)
        .map(|(r, u)| (u - pansu::profile(1.0, r.min(1.0)).unwrap_or(0.0)).abs())
        .fold(0.0, f64::max);
    assert!(dev <= 0.02 * u0, "{dev}");
    // accepted steps never increase the perimeter, and the volume stays put
    assert!(trace.perimeters.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(trace.volume_errors.iter().all(|e| *e <= 1e-8));
    let cmc = cmc_check(&prof, 0.1, 0.9, 41).unwrap();
    assert!(cmc.spread <= 0.02, "{cmc:?}");
    assert!((cmc.radius_times_curvature - 1.0).abs() <= 0.02, "{cmc:?}");
}

#[test]
fn cap_and_cone_reach_the_same_basin() {
    let cap = axi_perimeter(&optimize(V1, &OptimizerConfig::default()).unwrap());
    let cfg = OptimizerConfig { init: Init::Cone, ..OptimizerConfig::default() };
    let cone = axi_perimeter(&optimize(V1, &cfg).unwrap());
    assert!((cap / cone - 1.0).abs() < 5e-3, "{cap} {cone}");
}

#[test]
fn profile_start_from_a_file() {
    let start = AxiProfile::from_fn(1.3, 40, |r| 0.5 * (1.69 - r * r)).unwrap();
    let mut buf = Vec::new();
    start.write_csv(&mut buf).unwrap();
    let read = AxiProfile::read_csv(buf.as_slice()).unwrap();
    let cfg = OptimizerConfig { init: Init::Profile(read), nodes: 256, ..OptimizerConfig::default() };
    let p = axi_perimeter(&optimize(V1, &cfg).unwrap());
    assert!((p / (PI * PI) - 1.0).abs() < 0.02, "{p}");
}

#[test]
fn scaling_over_a_decade() {
    let cfg = OptimizerConfig { nodes: 256, ..OptimizerConfig::default() };
    let volumes: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|k| k * V1).collect();
    let points: Vec<ProfilePoint> = profile_curve(&volumes, &cfg).unwrap().into_iter().map(|p| p.0).collect();
    let report = scaling_check(&points).unwrap();
    assert!((report.exponent - 0.75).abs() <= 0.05);
    assert!(report.pairwise_error <= 0.02 && report.ratio_spread <= 0.02, "{report:?}");
    assert!(scaling_check(&points[1..3]).is_err());
}

#[test]
fn bad_targets_are_rejected() {
    let cfg = OptimizerConfig::default();
    assert!(matches!(optimize(cfg.volume_floor() / 2.0, &cfg), Err(Error::VolumeTooSmall { .. })));
    assert!(optimize(-1.0, &cfg).is_err());
    let tight = OptimizerConfig { max_iter: 3, ..OptimizerConfig::default() };
    assert!(matches!(optimize(V1, &tight), Err(Error::NotConverged { .. })));
}

#[test]
fn profile_csv_rejects_bad_rows() {
    assert!(AxiProfile::read_csv("r,u\n0,1\n0.5,0.5\n1,0.2\n".as_bytes()).is_err());
    assert!(AxiProfile::read_csv("r,u\n0,1\n0.5,x\n1,0\n".as_bytes()).is_err());
    assert!(AxiProfile::new(1.0, vec![0.0, 0.5, 1.0], vec![1.0, -0.1, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn dilated_profiles_scale(lambda in 0.25..4.0f64, a in 0.1..1.0f64, b in 0.0..0.5f64) {
        let u = AxiProfile::from_fn(1.0, 128, |r| a * (1.0 - r * r) + b * (1.0 - r * r).powi(2)).unwrap();
        let d = u.dilate(lambda);
        prop_assert!((axi_perimeter(&d) / axi_perimeter(&u) / lambda.powi(3) - 1.0).abs() < 1e-10);
        prop_assert!((axi_volume(&d) / axi_volume(&u) / lambda.powi(4) - 1.0).abs() < 1e-10);
        let v = u.with_volume(2.0).unwrap();
        prop_assert!((axi_volume(&v) / 2.0 - 1.0).abs() < 1e-8);
    }
}
