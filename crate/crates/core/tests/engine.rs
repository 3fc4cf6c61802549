use std::f64::consts::PI;

use dfcontour::branch::{sheet_branch, BranchCache};
use dfcontour::contour::{z_of, Contour, ContourParams};
use dfcontour::engine::*;
use dfcontour::geometry::{CubePoint, MollifierParams};
use dfcontour::oracle::{beta_fn, i010_closed};
use dfcontour::quad::QuadSpec;
use dfcontour::signature::{prefactor, sheets, ParamSet, Sheet, Signature};
use dfcontour::Error;
use num_complex::Complex64;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn sig(l: usize, m: usize, n: usize) -> Signature {
    Signature::new(l, m, n).unwrap()
}

fn zero_params(s: &Signature) -> ParamSet {
    let d = s.dim();
    ParamSet::real(s, &vec![0.0; d], &vec![0.0; d], &vec![0.0; s.pair_count()]).unwrap()
}

/// `det ∂Z/∂a` by Richardson-extrapolated central differences in `a`.
fn reference_jacobian(s: &Signature, cp: &ContourParams, a: &[f64], sheet: Sheet) -> Complex64 {
    let d = a.len();
    let col = |k: usize, h: f64| -> Vec<Complex64> {
        let mut p = a.to_vec();
        p[k] += h;
        let zp = z_of(s, cp, &CubePoint::new(p.clone()).unwrap(), sheet).unwrap().z;
        p[k] -= 2.0 * h;
        let zm = z_of(s, cp, &CubePoint::new(p).unwrap(), sheet).unwrap().z;
        zp.iter().zip(&zm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
    };
    let rich = |k: usize| -> Vec<Complex64> {
        let (c1, c2) = (col(k, 2e-4), col(k, 1e-4));
        c1.iter().zip(&c2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
    };
    let cols: Vec<Vec<Complex64>> = (0..d).map(rich).collect();
    match d {
        1 => cols[0][0],
        2 => cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1],
        _ => unreachable!(),
    }
}

#[test]
fn zero_exponents_give_the_bare_jacobian() {
    for (s, a) in [(sig(0, 1, 0), vec![0.37]), (sig(0, 2, 0), vec![0.37, 0.81]), (sig(1, 1, 0), vec![0.02, 0.6])] {
        let cp = default_contour(&s).unwrap();
        let contour = Contour::new(&s, cp);
        for sheet in [Sheet::BASE, Sheet::new(1)] {
            let b = sheet_branch(&contour, sheet).unwrap();
            let f = pullback_form(&contour, &a, &b, &zero_params(&s)).unwrap();
            let j = reference_jacobian(&s, &cp, &a, sheet);
            assert!(rel(f, j) < 1e-7, "{s} {a:?}: {f} vs {j}");
        }
    }
}

#[test]
fn base_sheet_approaches_the_real_integrand() {
    let s = sig(0, 1, 0);
    let p = ParamSet::real(&s, &[0.3], &[0.4], &[]).unwrap();
    let mut errs = Vec::new();
    for dg in [1e3, 1e6] {
        let cp = ContourParams::new(MollifierParams::default(), 0.1, 0.025, dg).unwrap();
        let contour = Contour::new(&s, cp);
        let b = sheet_branch(&contour, Sheet::BASE).unwrap();
        let x: f64 = 0.45;
        let f = pullback_form(&contour, &[x], &b, &p).unwrap();
        errs.push((f - c(x.powf(0.3) * (1.0 - x).powf(0.4))).norm());
    }
    assert!(errs[1] < 1e-5 && errs[1] < errs[0], "{errs:?}");
}

#[test]
fn sheets_differ_by_their_phase_away_from_facets() {
    let s = sig(0, 2, 0);
    let p = reference_params(&s);
    let cp = default_contour(&s).unwrap();
    let contour = Contour::new(&s, cp);
    let cache = BranchCache::new(&contour).unwrap();
    let base = cache.get(&contour, Sheet::BASE).unwrap();
    let a = [0.45, 0.6];
    let f0 = pullback_form(&contour, &a, &base, &p).unwrap();
    let exps = p.factor_exponents();
    for sheet in sheets(&s).unwrap().into_iter().skip(1).step_by(7) {
        let b = cache.get(&contour, sheet).unwrap();
        let f = pullback_form(&contour, &a, &b, &p).unwrap();
        let expected = f0 * (Complex64::new(0.0, 1.0) * b.phase(&exps)).exp();
        assert!(rel(f, expected) < 1e-10, "{sheet:?}");
    }
}

#[test]
fn n1_regularized_modulus_matches_prefactor_times_beta() {
    let s = sig(0, 1, 0);
    let p = ParamSet::real(&s, &[0.3], &[0.4], &[]).unwrap();
    let cp = default_contour(&s).unwrap();
    let spec = QuadSpec::for_dim(1).with_rel_tol(1e-9);
    let r = regularized_integral(&s, &p, &cp, &spec, &EngineOptions::default()).unwrap();
    let two_i = Complex64::new(0.0, 2.0);
    let expected = two_i * (0.3 * PI).sin() * two_i * (0.4 * PI).sin() * i010_closed(c(0.3), c(0.4)).unwrap();
    assert!((r.value.norm() - expected.norm()).abs() < 1e-8 * expected.norm());
    assert_eq!(r.per_sheet.len(), 4);
}

#[test]
fn integer_alpha_cancels() {
    let s = sig(0, 1, 0);
    let p = ParamSet::real(&s, &[1.0], &[0.4], &[]).unwrap();
    let cp = default_contour(&s).unwrap();
    let spec = QuadSpec::for_dim(1).with_rel_tol(1e-9).with_abs_tol(1e-9);
    let r = regularized_integral(&s, &p, &cp, &spec, &EngineOptions::default()).unwrap();
    let scale = r.per_sheet.values().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(r.value.norm() < 1e-8 * scale, "{} vs {scale}", r.value);
}

#[test]
fn strategies_agree() {
    let s = sig(0, 1, 0);
    let p = ParamSet::real(&s, &[0.3], &[-0.6], &[]).unwrap();
    let cp = default_contour(&s).unwrap();
    let spec = QuadSpec::for_dim(1).with_rel_tol(1e-8);
    let cv = regularized_integral(&s, &p, &cp, &spec, &EngineOptions::default()).unwrap();
    let opts = EngineOptions { strategy: SheetStrategy::Independent, ..Default::default() };
    let ind = regularized_integral(&s, &p, &cp, &spec, &opts).unwrap();
    assert!((cv.value - ind.value).norm() <= 3.0 * (cv.error_estimate + ind.error_estimate));
    for (sheet, v) in &cv.per_sheet {
        assert!(rel(*v, ind.per_sheet[sheet]) < 1e-6, "{sheet:?}");
    }
}

#[test]
fn n1_theorem_and_predicted_phase() {
    let cases = [
        (sig(0, 1, 0), 0.3, 0.4),
        (sig(1, 0, 0), 0.3, -2.1),
        (sig(0, 0, 1), -2.1, 0.3),
    ];
    for (s, a, b) in cases {
        let p = ParamSet::real(&s, &[a], &[b], &[]).unwrap();
        let cp = default_contour(&s).unwrap();
        let spec = QuadSpec::for_dim(1).with_rel_tol(1e-9);
        let r = verify_theorem(&s, &p, &cp, &spec, &EngineOptions::default()).unwrap();
        assert!(r.rel_residual < 1e-6, "{s}: {}", r.rel_residual);
        assert!((r.fitted_phase - r.predicted_phase).norm() < 1e-6, "{s}: {} vs {}", r.fitted_phase, r.predicted_phase);
    }
}

#[test]
fn calibration_is_one_at_two_reference_points() {
    for s in [sig(0, 1, 0), sig(1, 0, 0), sig(0, 0, 1)] {
        let cp = default_contour(&s).unwrap();
        let spec = QuadSpec::for_dim(1).with_rel_tol(1e-8);
        let first = reference_params(&s);
        let second = ParamSet::real(&s, &[first.alpha[0].re + 0.17], &[first.beta[0].re + 0.11], &[]).unwrap();
        for p in [first, second] {
            let k = Continuation::calibrate(&s, &cp, &spec, &EngineOptions::default(), &p).unwrap();
            assert!((k.calibration - 1.0).norm() < 1e-6, "{s}: {}", k.calibration);
        }
    }
}

#[test]
fn continuation_reaches_a_beta_pole_side() {
    let s = sig(0, 1, 0);
    let cp = default_contour(&s).unwrap();
    let spec = QuadSpec::for_dim(1).with_rel_tol(1e-8);
    let p = ParamSet::real(&s, &[-1.5], &[0.4], &[]).unwrap();
    let v = continued_value(&s, &p, &cp, &spec).unwrap();
    let exact = beta_fn(c(-0.5), c(1.4)).unwrap();
    assert!(rel(v, exact) < 1e-6, "{v} vs {exact}");
}

#[test]
fn vanishing_prefactor_is_reported() {
    let s = sig(0, 1, 0);
    let p = ParamSet::real(&s, &[1.0], &[0.4], &[]).unwrap();
    assert!(prefactor(&s, &p).norm() < 1e-12);
    let cp = default_contour(&s).unwrap();
    let err = verify_theorem(&s, &p, &cp, &QuadSpec::for_dim(1), &EngineOptions::default()).unwrap_err();
    assert!(matches!(err, Error::PrefactorNearZero { .. }), "{err}");
}

#[test]
fn large_signatures_need_opt_in() {
    let s = sig(1, 1, 1);
    let p = reference_params(&s);
    let cp = ContourParams::with_delta(&s, MollifierParams::default(), 0.05).unwrap();
    let err = regularized_integral(&s, &p, &cp, &QuadSpec::for_dim(3), &EngineOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn sheet_sum_factorizes() {
    for s in [sig(0, 1, 0), sig(1, 0, 0), sig(0, 2, 0), sig(1, 1, 0)] {
        let p = reference_params(&s);
        let contour = Contour::new(&s, default_contour(&s).unwrap());
        let model = PhaseModel::measure(&contour).unwrap();
        let sum = model.sheet_sum(&p).unwrap();
        let pre = prefactor(&s, &p);
        assert!((sum - model.phi(&p) * pre).norm() < 1e-10 * pre.norm(), "{s}");
    }
}
