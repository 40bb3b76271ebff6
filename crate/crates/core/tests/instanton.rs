mod common;

use common::*;
use orbit_core::expansion::ExpansionContext;
use orbit_core::instanton::*;
use orbit_core::sl2kit::{sl2_identity, SlHom};
use orbit_core::{OrbitError, RealSemisimpleAlgebra};
use proptest::prelude::*;

fn core_solution(phi0: &SlHom, t: f64) -> SlHom {
    phi0.scale(1.0 / (1.0 + t))
}

/// A solution off the core: the series with a small free datum, evaluated at
/// t = 1.
fn perturbed_start(n: usize, part: &[usize], c: f64) -> (RealSemisimpleAlgebra, SlHom, SlHom) {
    let (a, phi0) = orbit(n, part);
    let ctx = ExpansionContext::new(&a, &phi0).unwrap();
    let coords = vec![c; ctx.normal.len()];
    let free = ctx.free_from_coords(&coords);
    let s = ctx.build(&free, 30).unwrap();
    (a, phi0, s.evaluate(1.0))
}

#[test]
fn identity_is_fixed_by_q() {
    let (a, _) = orbit(2, &[2]);
    let id = sl2_identity(&a);
    assert!(q_pairing(&a, &id, &id).sub(&id).amax() < 1e-14);
    assert!(is_morphism(&a, &id, 1e-12));
    assert!(!is_morphism(&a, &id.scale(0.5), 1e-6));
    assert!(!is_morphism(&a, &SlHom::zeros(3), 1e-6));
}

#[test]
fn q_dimension_check() {
    let (a, phi0) = orbit(2, &[2]);
    let big = SlHom::zeros(8);
    assert!(matches!(try_q_pairing(&a, &phi0, &big), Err(OrbitError::DimensionMismatch { .. })));
}

#[test]
fn rhs_forms_agree() {
    let (a, _, phi) = perturbed_start(3, &[3], 0.05);
    let r1 = ode_rhs(&a, &phi);
    let r2 = ode_rhs_triple(&a, &phi);
    assert!(r1.sub(&r2).amax() < 1e-13);
    let (a, phi0) = orbit(3, &[3]);
    assert!(ode_rhs(&a, &phi0).add(&phi0).amax() < 1e-14);
    assert_eq!(ode_rhs(&a, &SlHom::zeros(8)).amax(), 0.0);
    let t = 2.0;
    let want = phi0.scale(-1.0 / ((1.0 + t) * (1.0 + t)));
    assert!(ode_rhs(&a, &core_solution(&phi0, t)).sub(&want).amax() < 1e-14);
}

#[test]
fn core_solution_is_exact() {
    for (n, part) in [(2, vec![2]), (3, vec![3]), (3, vec![2, 1])] {
        let (a, phi0) = orbit(n, &part);
        let traj = integrate(&a, &phi0, 0.0, 10.0, &default_ode_options()).unwrap();
        for (t, v) in traj.times.iter().zip(&traj.values) {
            assert!(v.sub(&core_solution(&phi0, *t)).amax() < 1e-8, "t = {t}");
        }
        assert!(traj.meta.accepted > 0);
    }
}

#[test]
fn zero_stays_zero() {
    let (a, _) = orbit(2, &[2]);
    let traj = integrate(&a, &SlHom::zeros(3), 0.0, 5.0, &default_ode_options()).unwrap();
    assert!(traj.values.iter().all(|v| v.amax() == 0.0));
}

#[test]
fn backward_flow_lands_in_orbit() {
    // Series time 1 is time 0 of the solutions normalized as Phi0 / (1 + t).
    let (a, phi0) = orbit(2, &[2]);
    let ctx = ExpansionContext::new(&a, &phi0).unwrap();
    let free = ctx.free_from_coords(&[0.1]);
    let s = ctx.build(&free, 40).unwrap();
    let v = flow_to(&a, &s.evaluate(10.0), 10.0, 1.0, &default_ode_options()).unwrap();
    assert!(v.sub(&s.evaluate(1.0)).amax() < 1e-9);
    assert!(v.e.is_real(0.0));
    assert!(a.nilpotency_residual(&v.e) < 1e-10);
    assert!(a.norm(&v.e) > 0.1);
}

#[test]
fn flags_and_nilpotency_are_preserved() {
    let (a, _, start) = perturbed_start(3, &[3], 0.05);
    let traj = integrate_at(&a, &start, 1.0, &[2.0, 10.0, 100.0], &default_ode_options()).unwrap();
    for v in &traj.values {
        assert!(v.theta_residual(&a) < 1e-8);
        assert!(v.values().iter().all(|x| x.is_real(0.0)));
        // E(t) stays in one nilpotent orbit.
        assert!(a.nilpotency_residual(&v.e) < 1e-10);
    }
}

#[test]
fn c_a_fixes_core_solution() {
    let (a, phi0) = orbit(3, &[3]);
    let opts = default_ode_options();
    let curve = InstantonCurve::new(0.0, phi0.clone());
    for s in [1.0, 2.0, 7.5] {
        let c = curve.c_a(s).unwrap();
        let v = c.eval(&a, 3.0, &opts).unwrap();
        assert!(v.sub(&core_solution(&phi0, 3.0)).amax() < 1e-9);
    }
    assert!(curve.c_a(0.5).is_err());
    assert!(c_a_initial(&a, &phi0, 4.0, &opts).unwrap().sub(&phi0).amax() < 1e-9);
}

#[test]
fn c_a_semigroup_on_trajectory() {
    let (a, _, start) = perturbed_start(2, &[2], 0.1);
    let opts = default_ode_options();
    let traj = integrate(&a, &start, 1.0, 40.0, &opts).unwrap();
    let lhs = c_a(&c_a(&traj, 3.0).unwrap(), 2.0).unwrap();
    let rhs = c_a(&traj, 6.0).unwrap();
    for i in 0..traj.times.len() {
        assert!((lhs.times[i] - rhs.times[i]).abs() < 1e-12);
        assert!(lhs.values[i].sub(&rhs.values[i]).amax() < 1e-12);
    }
    // Resampling oracle: C_6 of the curve, evaluated by integration.
    let curve = InstantonCurve::new(1.0, start);
    let c6 = curve.c_a(2.0).unwrap().c_a(3.0).unwrap();
    let direct = curve.c_a(6.0).unwrap();
    for t in [0.0, 1.0, 5.0] {
        let x = c6.eval(&a, t, &opts).unwrap();
        let y = direct.eval(&a, t, &opts).unwrap();
        assert!(x.sub(&y).amax() < 1e-9);
    }
}

#[test]
fn scale_flow_laws() {
    let (a, phi0) = orbit(2, &[2]);
    let opts = default_ode_options();
    let traj = integrate(&a, &phi0, 0.0, 5.0, &opts).unwrap();
    let s = scale_flow(&traj, 3.0).unwrap();
    for (t, v) in s.times.iter().zip(&s.values) {
        assert!(v.sub(&phi0.scale(3.0 / (1.0 + 3.0 * t))).amax() < 1e-8);
    }
    let ab = scale_flow(&scale_flow(&traj, 2.0).unwrap(), 0.5).unwrap();
    for i in 0..traj.times.len() {
        assert!((ab.times[i] - traj.times[i]).abs() < 1e-12);
        assert!(ab.values[i].sub(&traj.values[i]).amax() < 1e-12);
    }
    assert!(scale_flow(&traj, 0.0).is_err());
}

#[test]
fn limit_of_core_solution() {
    let (a, phi0) = orbit(3, &[3]);
    let traj = integrate(&a, &phi0, 0.0, 2000.0, &default_ode_options()).unwrap();
    let fit = extract_limit(&a, &traj).unwrap();
    assert!(fit.phi0.sub(&phi0).amax() < 1e-6);
    assert!(is_morphism(&a, &fit.phi0, 1e-6));
}

#[test]
fn limit_of_perturbed_solution() {
    let (a, phi0, start) = perturbed_start(2, &[2], 0.1);
    let traj = integrate(&a, &start, 1.0, 1e5, &default_ode_options()).unwrap();
    let fit = extract_limit(&a, &traj).unwrap();
    assert!(fit.phi0.sub(&phi0).amax() < 1e-6);
}

#[test]
fn limit_rejects_divergent_trajectory() {
    let (a, phi0) = orbit(2, &[2]);
    // A negative multiple of a morphism decays like 1/(t - 1): it blows up.
    let start = phi0.scale(-1.0);
    assert!(matches!(integrate(&a, &start, 0.0, 2.0, &default_ode_options()), Err(OrbitError::BlowUp(_))));
    let traj = integrate(&a, &start, 0.0, 0.9, &default_ode_options()).unwrap();
    assert!(extract_limit(&a, &traj).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn q_is_symmetric(c1 in proptest::collection::vec(-1.0f64..1.0, 18), c2 in proptest::collection::vec(-1.0f64..1.0, 18)) {
        let (a, _) = orbit(2, &[2]);
        let s = |c: &Vec<f64>| SlHom::from_stacked(&nalgebra::DVector::from_vec(c.clone()));
        let (p, q) = (s(&c1), s(&c2));
        prop_assert!(q_pairing(&a, &p, &q).sub(&q_pairing(&a, &q, &p)).amax() < 1e-14);
    }

    #[test]
    fn quadratic_scaling(c in 0.5f64..2.0) {
        let (a, _, start) = perturbed_start(2, &[2], 0.1);
        let opts = default_ode_options();
        let t = 2.0;
        let lhs = flow_to(&a, &start.scale(c), 0.0, t, &opts).unwrap();
        let rhs = flow_to(&a, &start, 0.0, c * t, &opts).unwrap().scale(c);
        prop_assert!(lhs.sub(&rhs).amax() < 1e-8);
    }
}
