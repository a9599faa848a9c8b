use ccperim::contact::*;
use ccperim::Error;
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn homogeneous_dimension_and_exponent() {
    for n in 1..=4 {
        let s = ContactStructure::standard(n).unwrap();
        assert_eq!(s.homogeneous_dimension(), 2 * n + 2);
        let q = (2 * n + 1) as f64 / (2 * n + 2) as f64;
        assert_eq!(s.isoperimetric_exponent(), q);
    }
    assert!(matches!(ContactStructure::standard(0), Err(Error::InvalidDimension(0))));
}

#[test]
fn frame_off_the_origin() {
    let s = ContactStructure::standard(1).unwrap();
    let f = s.frame_at(&Point::new(vec![1.0, 2.0], 0.0).unwrap());
    assert!(close(&f[0], &[1.0, 0.0, 2.0], 1e-15));
    assert!(close(&f[1], &[0.0, 1.0, -1.0], 1e-15));
    assert!(close(&f[2], &[0.0, 0.0, 1.0], 0.0));
}

#[test]
fn reeb_field_pairs_to_one() {
    let s = ContactStructure::standard(2).unwrap();
    let p = Point::new(vec![0.3, -1.2, 4.0, 0.5], -2.0).unwrap();
    let f = s.frame_at(&p);
    assert_eq!(contact_form(&p, &f[4]), 1.0);
    for z in &f[..4] {
        assert!(contact_form(&p, z).abs() < 1e-12);
    }
}

#[test]
fn sigma_is_the_complex_structure_pairing() {
    let s = ContactStructure::standard(1).unwrap();
    let p = Point::new(vec![0.7, 0.1], 3.0).unwrap();
    let x = HorizontalVector::new(p.clone(), vec![1.0, 0.0]).unwrap();
    let y = HorizontalVector::new(p, vec![0.0, 1.0]).unwrap();
    assert_eq!(sigma_standard(&s, &x, &y).unwrap(), 1.0);
    assert_eq!(sigma_standard(&s, &x, &x).unwrap(), 0.0);
    assert_eq!(sigma_standard(&s, &y, &x).unwrap(), -1.0);
    let g = ContactStructure::diagonal(&[2.0, 1.0]).unwrap();
    assert!(matches!(sigma_standard(&g, &x, &y), Err(Error::NonStandardMetric)));
}

#[test]
fn dilation_of_a_sample_point() {
    let p = Point::new(vec![1.0, 0.0], 1.0).unwrap();
    assert_eq!(dilate(2.0, &p).unwrap(), Point::new(vec![2.0, 0.0], 4.0).unwrap());
    assert_eq!(dilate(1.0, &p).unwrap(), p);
    assert!(dilate(0.0, &p).is_err());
    assert!(dilate(-1.0, &p).is_err());
}

#[test]
fn point_validation() {
    assert!(Point::new(vec![1.0], 0.0).is_err());
    assert!(Point::new(vec![], 0.0).is_err());
    assert!(Point::new(vec![f64::NAN, 0.0], 0.0).is_err());
    assert!(Point::new(vec![0.0, 0.0], f64::INFINITY).is_err());
}

#[test]
fn structure_config_strings() {
    let s = StructureConfig { n: 1, metric: "diagonal(2, 3)".into() }.build(None).unwrap();
    assert!(s.is_left_invariant() && !s.is_standard());
    assert_eq!(s.metric_at(&[5.0, 5.0], 1.0)[(1, 1)], 3.0);
    assert!(StructureConfig { n: 1, metric: "diagonal(1,2,3)".into() }.build(None).is_err());
    assert!(StructureConfig { n: 1, metric: "diagonal(1,-2)".into() }.build(None).is_err());
    assert!(StructureConfig { n: 1, metric: "hyperbolic".into() }.build(None).is_err());
    let s = ContactStructure::from_config_str("n = 2\n", None).unwrap();
    assert!(s.is_standard() && s.n() == 2);
}

#[test]
fn horizontal_vector_norm_uses_metric() {
    let s = ContactStructure::diagonal(&[4.0, 9.0]).unwrap();
    let v = HorizontalVector::new(Point::origin(1), vec![1.0, 1.0]).unwrap();
    assert!((v.norm(&s) - 13f64.sqrt()).abs() < 1e-14);
    assert_eq!(v.to_coordinates(), vec![1.0, 1.0, 0.0]);
}

proptest! {
    #[test]
    fn dilation_is_a_group_homomorphism(
        l in 0.1..10.0f64,
        x1 in -5.0..5.0f64, y1 in -5.0..5.0f64, t1 in -5.0..5.0f64,
        x2 in -5.0..5.0f64, y2 in -5.0..5.0f64, t2 in -5.0..5.0f64,
    ) {
        let p = Point::new(vec![x1, y1], t1).unwrap();
        let q = Point::new(vec![x2, y2], t2).unwrap();
        let lhs = dilate(l, &group_mul(&p, &q)).unwrap();
        let rhs = group_mul(&dilate(l, &p).unwrap(), &dilate(l, &q).unwrap());
        prop_assert!(close(&lhs.coords(), &rhs.coords(), 1e-10 * (1.0 + l * l * 50.0)));
    }

    #[test]
    fn dilation_round_trip(l in 0.05..20.0f64, x in -5.0..5.0f64, y in -5.0..5.0f64, t in -5.0..5.0f64) {
        let p = Point::new(vec![x, y], t).unwrap();
        let back = dilate(l, &dilate(1.0 / l, &p).unwrap()).unwrap();
        prop_assert!(close(&back.coords(), &p.coords(), 1e-12 * 10.0));
    }

    #[test]
    fn constant_metrics_are_spd_everywhere(
        a in 0.1..10.0f64, b in 0.1..10.0f64,
        x in -100.0..100.0f64, y in -100.0..100.0f64, t in -100.0..100.0f64,
    ) {
        let s = ContactStructure::diagonal(&[a, b]).unwrap();
        let g = s.metric_at(&[x, y], t);
        prop_assert!((g[(0, 1)] - g[(1, 0)]).abs() <= 1e-12);
        prop_assert!(s.factor_at(&[x, y], t).unwrap().determinant > 0.0);
    }
}
