mod common;

use common::*;
use nalgebra::Complex;
use orbit_core::inequality::*;
use orbit_core::sekiguchi::{deformation_flow, p_core_coords};
use orbit_core::{GVector, OrbitError, RealSemisimpleAlgebra};
use proptest::prelude::*;
use rand::Rng;

fn family(a: &RealSemisimpleAlgebra, s: f64) -> GVector {
    let (e, f, h) = (a.basis_vector(0), a.basis_vector(1), a.basis_vector(2));
    let i = Complex::new(0.0, 1.0);
    (&(&h + &e.scale_c(i)) + &f.scale_c(i)).scale(s)
}

fn sl3_seeds() -> (RealSemisimpleAlgebra, Vec<GVector>) {
    let (a, reg) = orbit(3, &[3]);
    let min = orbit_core::sl2kit::sl_partition_triple(3, &[2, 1]).unwrap().to_hom(&a);
    (a, vec![reg.eval(p_core_coords()), min.eval(p_core_coords())])
}

fn lookup(d: &SpectralData, l: f64) -> f64 {
    d.pairs().iter().find(|p| (p.0 - l).abs() < 1e-9).map(|p| p.1).unwrap_or(0.0)
}

#[test]
fn spectral_data_of_sl2_family() {
    let (a, _, _, _) = sl2();
    for s in [0.3, 1.0, 2.0] {
        let d = spectral_decompose(&a, &family(&a, s)).unwrap();
        assert_eq!(d.lambdas.len(), 3);
        assert!((lookup(&d, 0.0) - 2.0 * s * s).abs() < 1e-12);
        assert!((lookup(&d, 2.0 * s) - s * s).abs() < 1e-12);
        assert!((lookup(&d, -2.0 * s) - s * s).abs() < 1e-12);
        assert!(d.invariants.max() < 1e-12);
    }
}

#[test]
fn purely_imaginary_points_are_not_nilpotent() {
    // Elements of p_R are ad-semisimple, so zeta = i eta with eta in p_R is
    // nilpotent only when it vanishes.
    let (a, e, f, h) = sl2();
    for eta in [&e + &f, h.clone(), &h.scale(0.3) + &(&e + &f).scale(2.0)] {
        assert!(matches!(spectral_decompose(&a, &eta.mul_i()), Err(OrbitError::NotNilpotent(_))));
    }
}

#[test]
fn decomposition_rejects_bad_input() {
    let (a, e, _, h) = sl2();
    assert!(matches!(spectral_decompose(&a, &e), Err(OrbitError::NotInP)));
    assert!(matches!(spectral_decompose(&a, &h), Err(OrbitError::NotNilpotent(_))));
    assert!(matches!(spectral_decompose(&a, &GVector::zeros(3)), Err(OrbitError::ZeroElement)));
}

#[test]
fn balance_on_random_orbit_points() {
    let (a, seeds) = sl3_seeds();
    let mut r = rng(2);
    for i in 0..40 {
        let z = sample_orbit_point(&a, &seeds[i % 2], 1.0, &mut r).unwrap();
        let d = spectral_decompose(&a, &z).unwrap();
        assert!((a.norm_sq(&d.xi) - a.norm_sq(&d.eta)).abs() < 1e-9);
        assert!(a.inner(&d.xi, &d.eta).re.abs() < 1e-9);
        assert!((d.total() - a.norm_sq(&z)).abs() < 1e-9);
        let (pairs, _) = d.normalized();
        let a0: f64 = pairs.iter().filter(|p| p.0 == 0.0).map(|p| p.1).sum();
        assert!(a0 >= 1.0 - 1e-9);
    }
}

#[test]
fn closed_forms_at_zero() {
    let (a, _, _, _) = sl2();
    let d = spectral_decompose(&a, &family(&a, 0.7)).unwrap();
    let m = m_components_spectral(&d, 0.0);
    assert!((m.m0_sq - 2.0).abs() < 1e-12);
    assert!(m.m1_sq.abs() < 1e-14);
    let c = flow_bound_check(&a, &family(&a, 0.7), 0.0).unwrap();
    assert!((c.lhs - c.rhs).abs() < EQ_TOL);
}

#[test]
fn closed_forms_match_moment_map() {
    let (a, seeds) = sl3_seeds();
    let mut r = rng(3);
    for i in 0..20 {
        let z = sample_orbit_point(&a, &seeds[i % 2], 1.0, &mut r).unwrap();
        let t = r.gen_range(0.0..3.0);
        let d = spectral_decompose(&a, &z).unwrap();
        let sp = m_components_spectral(&d, t);
        let direct = m_components_direct(&a, &z, t).unwrap();
        assert!((sp.m1_sq - direct.m1_sq).abs() < 1e-8);
        assert!((sp.m3_sq - direct.m3_sq).abs() < 1e-8);
        assert!((sp.m0_sq - direct.m0_sq).abs() < 1e-8);
    }
    // The flow used by the direct form is f_t.
    let z = family(&a_sl2(), 0.5);
    let ft = deformation_flow(&a_sl2(), &z, 1.0).unwrap();
    assert!((&ft.re - &z.re).amax() < 1e-14);
}

fn a_sl2() -> RealSemisimpleAlgebra {
    sl2().0
}

#[test]
fn sl2_family_bound_holds() {
    let a = a_sl2();
    let c = flow_bound_check(&a, &family(&a, 0.5), 1.0).unwrap();
    assert!(c.holds);
    let d = flow_bound_direct(&a, &family(&a, 0.5), 1.0).unwrap();
    assert!((c.lhs - d.lhs).abs() < 1e-10 && (c.rhs - d.rhs).abs() < 1e-10);
}

#[test]
fn h_form_examples() {
    let base = [(-1.0, 0.5), (0.0, 1.0), (1.0, 0.5)];
    let h = inequality_h_form(&base, 0.0).unwrap();
    assert!((h.lhs - h.rhs).abs() < EQ_TOL);
    // For this data h(t) = 1 + cosh t and both sides coincide for every t.
    for t in [0.5, 2.0, 10.0, 200.0] {
        let h = inequality_h_form(&base, t).unwrap();
        let (l, r) = h.per_h_squared();
        assert!(h.holds && (l - r).abs() < 1e-12, "t = {t}");
    }
    let strict = [(-1.0, 0.4), (0.0, 1.2), (1.0, 0.4)];
    let h = inequality_h_form(&strict, 2.0).unwrap();
    let (l, r) = h.per_h_squared();
    assert!(h.holds && l - r > 1e-3);
    let two = [(-2.0, 0.2), (-1.0, 0.3), (0.0, 1.0), (1.0, 0.3), (2.0, 0.2)];
    assert!(inequality_h_form(&two, 3.0).unwrap().holds);
    // Extreme times do not overflow.
    let h = inequality_h_form(&two, 1e4).unwrap();
    assert!(h.lhs.is_finite() && h.rhs.is_finite() && h.holds);
}

#[test]
fn h_form_constraints() {
    let bad = |p: &[(f64, f64)]| matches!(inequality_h_form(p, 1.0), Err(OrbitError::Constraint(_)));
    assert!(bad(&[(0.0, 2.0)]));
    assert!(bad(&[(-1.0, 0.6), (0.0, 1.0), (1.0, 0.4)]));
    assert!(bad(&[(-1.0, 0.6), (0.0, 0.8), (1.0, 0.6)]));
    assert!(bad(&[(-1.0, 0.5), (0.0, 1.5), (1.0, 0.5)]));
    assert!(bad(&[(-1.0, 0.0), (0.0, 2.0), (1.0, 0.0)]));
}

#[test]
fn odd_derivatives_vanish() {
    let two = [(-2.0, 0.2), (-1.0, 0.3), (0.0, 1.0), (1.0, 0.3), (2.0, 0.2)];
    let d = h_derivatives(&two, 9);
    for k in (1..=9).step_by(2) {
        assert_eq!(d[k], 0.0);
    }
    assert!((d[0] - 2.0).abs() < 1e-15);
}

#[test]
fn chebyshev_examples() {
    let one = chebyshev_check(&[(-1.5, 0.5), (1.5, 0.5)], 3).unwrap();
    assert!(one.holds && one.equality);
    let two = chebyshev_check(&[(-1.0, 0.15), (1.0, 0.15), (-2.0, 0.1), (2.0, 0.1)], 2).unwrap();
    assert!(two.holds && !two.equality);
    let l0 = chebyshev_check(&[(-1.0, 0.15), (1.0, 0.15), (-2.0, 0.1), (2.0, 0.1)], 0).unwrap();
    assert!(l0.holds);
    assert!(chebyshev_check(&[(-1.0, 0.6), (1.0, 0.6)], 1).is_err());
    assert!(chebyshev_check(&[(0.0, 0.5)], 1).is_err());
}

#[test]
fn sweep_sl3() {
    let (a, seeds) = sl3_seeds();
    let mut r = rng(4);
    let rep = flow_bound_sweep(&a, &seeds, &SweepOptions { samples: 200, ..SweepOptions::default() }, &mut r).unwrap();
    assert_eq!(rep.samples, 200);
    assert_eq!(rep.failures, 0);
    assert_eq!(rep.disagreements, 0);
    assert!(rep.t0_gap < EQ_TOL);
    assert!(rep.side_mismatch < 1e-8);
    assert!(rep.argmin.is_some());
}

fn random_pairs(r: &mut impl Rng) -> Vec<(f64, f64)> {
    let n = r.gen_range(1..4);
    let a0 = r.gen_range(1.0..1.9);
    let mut w: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x *= (2.0 - a0) / (2.0 * s));
    let mut out = vec![(0.0, a0)];
    for (j, x) in w.into_iter().enumerate() {
        let l = r.gen_range(0.1..3.0) + j as f64 * 3.0;
        out.push((l, x));
        out.push((-l, x));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_inequalities_hold(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let p = random_pairs(&mut r);
        for k in 1..=6 {
            let c = derivative_check(&p, k).unwrap();
            prop_assert!(c.holds, "k = {}: {:?}", k, c);
        }
    }

    #[test]
    fn h_form_agrees_with_spectral_form(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let (a, seeds) = sl3_seeds();
        let z = sample_orbit_point(&a, &seeds[(seed % 2) as usize], 1.0, &mut r).unwrap();
        let t = r.gen_range(0.0..10.0);
        let o = evaluate_sample(&a, &z, t).unwrap();
        prop_assert!(o.agree);
        prop_assert!(o.mismatch < 1e-8);
        prop_assert!(o.bound.holds);
    }

    #[test]
    fn h_form_holds_on_random_data(seed in 0u64..100_000, t in 0.0f64..30.0) {
        let mut r = rng(seed);
        let p = random_pairs(&mut r);
        prop_assert!(inequality_h_form(&p, t).unwrap().holds);
    }
}
