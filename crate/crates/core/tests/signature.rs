use dfcontour::signature::*;
use num_complex::Complex64;

#[test]
fn polygon_double_genus() {
    let expected = [(3, 0), (4, 1), (5, 5), (6, 17)];
    for (n, g) in expected {
        assert_eq!(genus_of_polygon_double(n).unwrap(), g);
        assert_eq!(genus_from_cells(n), g);
    }
    assert!(genus_of_polygon_double(2).is_err());
}

#[test]
fn facet_counts() {
    // One facet per nonempty subset of each anchor pool.
    for (l, m, n, count) in [(0, 1, 0, 2), (1, 0, 0, 2), (0, 2, 0, 6), (1, 1, 0, 5), (1, 1, 1, 9)] {
        let sig = Signature::new(l, m, n).unwrap();
        assert_eq!(facet_count(&sig), count, "{sig}");
        assert_eq!(facets(&sig).len(), count);
        assert_eq!(sheets(&sig).unwrap().len(), 1 << count);
    }
}

#[test]
fn signature_bounds() {
    assert!(Signature::new(0, 0, 0).is_err());
    assert!(Signature::new(3, 2, 2).is_err());
    let s = Signature::new(1, 2, 3).unwrap();
    assert_eq!((s.dim(), s.pair_count()), (6, 15));
    assert_eq!((s.i1(), s.i2(), s.i3()), (0b1, 0b110, 0b111000));
}

#[test]
fn prefactor_of_one_variable() {
    let sig = Signature::new(0, 1, 0).unwrap();
    let p = ParamSet::real(&sig, &[0.3], &[0.4], &[]).unwrap();
    let two_i = Complex64::new(0.0, 2.0);
    let pi = std::f64::consts::PI;
    let expected = two_i * (pi * 0.3).sin() * two_i * (pi * 0.4).sin();
    assert!((prefactor(&sig, &p) - expected).norm() < 1e-14);
}

#[test]
fn prefactor_is_a_product_over_facets() {
    let sig = Signature::new(1, 1, 0).unwrap();
    let p = ParamSet::real(&sig, &[0.2, 0.3], &[0.45, 0.35], &[0.15]).unwrap();
    let expected: Complex64 = facets(&sig)
        .iter()
        .map(|f| {
            let e = facet_exponent(&p, f);
            Complex64::new(0.0, 2.0) * (std::f64::consts::PI * e).sin()
        })
        .product();
    assert!((prefactor(&sig, &p) - expected).norm() < 1e-13 * expected.norm());
}

#[test]
fn gamma_is_symmetric() {
    let sig = Signature::new(0, 3, 0).unwrap();
    let mut p = ParamSet::real(&sig, &[0.1; 3], &[0.1; 3], &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(p.gamma(2, 0).unwrap(), p.gamma(0, 2).unwrap());
    p.set_gamma(2, 1, Complex64::new(0.7, 0.0)).unwrap();
    assert_eq!(p.gamma(1, 2).unwrap().re, 0.7);
    assert!(p.gamma(1, 1).is_err());
}
