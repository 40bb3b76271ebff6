//! Kostant-Sekiguchi correspondence through cores and morphisms, the
//! deformation flow f_t, and the normal slice at a core point of a real orbit.

use crate::algebra::RealSemisimpleAlgebra;
use crate::element::GVector;
use crate::error::{OrbitError, Result};
use crate::linalg;
use crate::moment::{self, DescentOptions};
use crate::sl2kit::{self, SlHom};
use nalgebra::{Complex, DVector, Matrix2};
use serde::{Deserialize, Serialize};

const MORPHISM_TOL: f64 = 1e-8;

fn ci(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

/// The Cayley element c = (1/sqrt 2) [[1, i], [i, 1]] in SL(2, C).
pub fn cayley() -> Matrix2<Complex<f64>> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Matrix2::new(ci(r, 0.0), ci(0.0, r), ci(0.0, r), ci(r, 0.0))
}

fn s_matrix(x: [Complex<f64>; 3]) -> Matrix2<Complex<f64>> {
    let [e, f, h] = x;
    Matrix2::new(h, e, f, -h)
}

fn s_coords(m: &Matrix2<Complex<f64>>) -> [Complex<f64>; 3] {
    [m[(0, 1)], m[(1, 0)], m[(0, 0)]]
}

/// Ad(g) on s = sl(2, C) in (e, f, h) coordinates.
pub fn ad_sl2(g: &Matrix2<Complex<f64>>, x: [Complex<f64>; 3]) -> [Complex<f64>; 3] {
    let inv = g.try_inverse().expect("SL(2) element is invertible");
    s_coords(&(g * s_matrix(x) * inv))
}

/// The point h/2 + ie/2 + if/2 of s in (e, f, h) coordinates.
pub fn p_core_coords() -> [Complex<f64>; 3] {
    [ci(0.0, 0.5), ci(0.0, 0.5), ci(0.5, 0.0)]
}

fn ensure_morphism(alg: &RealSemisimpleAlgebra, phi: &SlHom) -> Result<()> {
    let res = phi.to_triple().residuals(alg).max();
    let th = phi.theta_residual(alg);
    let real = phi.values().iter().map(|v| v.im.amax()).fold(0.0, f64::max);
    let bad = res.max(th).max(real);
    if bad > MORPHISM_TOL * (1.0 + phi.amax()) {
        return Err(OrbitError::InvariantFailure(format!("recovered map is not a real theta-morphism (defect {bad:.3e})")));
    }
    Ok(())
}

/// Phi0 with Phi0(ie) = nu (after rescaling nu to a = -2), for a critical
/// nu = i zeta with zeta real.
pub fn morphism_from_gr_core(alg: &RealSemisimpleAlgebra, nu: &GVector, tol: f64) -> Result<SlHom> {
    alg.ensure_dim(nu)?;
    if nu.re.amax() > tol * (1.0 + nu.amax()) {
        return Err(OrbitError::InvalidParams("nu must lie in i g_R".into()));
    }
    let zeta = GVector::real(nu.im.clone());
    if zeta.amax() == 0.0 {
        return Err(OrbitError::ZeroElement);
    }
    let crit = moment::is_critical(alg, &zeta, tol)?;
    if !crit.critical {
        return Err(OrbitError::NotCritical { residual: crit.residual, a: crit.a });
    }
    let phi = sl2kit::strictly_normal_from_critical(alg, &zeta, tol)?.to_hom(alg);
    ensure_morphism(alg, &phi)?;
    Ok(phi)
}

/// Phi0 with Phi0(h/2 + ie/2 + if/2) = zeta (after rescaling zeta to a = -2),
/// for a critical zeta in the complexification of p_R.
pub fn morphism_from_p_core(alg: &RealSemisimpleAlgebra, zeta: &GVector, tol: f64) -> Result<SlHom> {
    alg.ensure_dim(zeta)?;
    if zeta.amax() == 0.0 {
        return Err(OrbitError::ZeroElement);
    }
    if !alg.is_in_p(zeta, tol) {
        return Err(OrbitError::NotInP);
    }
    let crit = moment::is_critical(alg, zeta, tol)?;
    if !crit.critical {
        return Err(OrbitError::NotCritical { residual: crit.residual, a: crit.a });
    }
    let z = zeta.scale((-2.0 / crit.a).sqrt());
    let xi = z.real_part();
    let eta = z.imag_part();
    let br = alg.bracket(&xi, &eta);
    let phi = SlHom::with_flags(alg, &br + &eta, &eta - &br, xi.scale(2.0));
    ensure_morphism(alg, &phi).map_err(|_| OrbitError::NotCritical { residual: crit.residual, a: crit.a })?;
    Ok(phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Nilpotent K-orbit in p to nilpotent G_R-orbit in i g_R.
    PToGr,
    /// The reverse direction.
    GrToP,
}

#[derive(Clone, Debug, Serialize)]
pub struct Partner {
    /// Unit-length core representative of the partner orbit.
    pub point: GVector,
    /// Unit-length core point reached from the input.
    pub source_core: GVector,
    pub phi0: SlHom,
    /// Sorted eigenvalues of ad(Phi0(h)), the orbit label used for comparison.
    pub h_spectrum: Vec<f64>,
}

fn unit(alg: &RealSemisimpleAlgebra, x: &GVector) -> GVector {
    x.scale(1.0 / alg.norm(x))
}

/// Sorted eigenvalues of ad(h) for a real semisimple h.
pub fn h_spectrum(alg: &RealSemisimpleAlgebra, h: &GVector) -> Vec<f64> {
    let m = alg.op_to_on(&alg.ad_real(&h.re));
    let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Descends to the core, recovers Phi0, and evaluates the opposite formula.
pub fn sekiguchi_partner(alg: &RealSemisimpleAlgebra, x: &GVector, direction: Direction) -> Result<Partner> {
    alg.ensure_dim(x)?;
    let scale = 1e-9 * (1.0 + x.amax());
    match direction {
        Direction::PToGr if !alg.is_in_p(x, scale) => return Err(OrbitError::NotInP),
        Direction::GrToP if x.re.amax() > scale => {
            return Err(OrbitError::InvalidParams("input must lie in i g_R".into()))
        }
        _ => {}
    }
    let d = moment::descend_to_core(alg, x, &DescentOptions { record: false, ..DescentOptions::default() })?;
    let core = moment::polish_core(alg, &d.core, 1e-13, 30)?;
    let (phi0, partner) = match direction {
        Direction::PToGr => {
            let phi0 = morphism_from_p_core(alg, &core, 1e-9)?;
            let p = phi0.e.mul_i();
            (phi0, p)
        }
        Direction::GrToP => {
            let phi0 = morphism_from_gr_core(alg, &core, 1e-9)?;
            let p = phi0.eval(p_core_coords());
            (phi0, p)
        }
    };
    let h_spectrum = h_spectrum(alg, &phi0.h);
    Ok(Partner { point: unit(alg, &partner), source_core: core, phi0, h_spectrum })
}

/// f_t(zeta) = Ad(exp(t Re zeta)) zeta.
pub fn deformation_flow(alg: &RealSemisimpleAlgebra, zeta: &GVector, t: f64) -> Result<GVector> {
    alg.ensure_dim(zeta)?;
    let g = alg.exp_ad_real(&(&zeta.re * t));
    Ok(RealSemisimpleAlgebra::apply_real(&g, zeta))
}

/// The root s in (0, 1] of s e^{2st} = 1.
pub fn solve_s_of_t(t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(OrbitError::InvalidParams(format!("t must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    // g(s) = ln s + 2 s t is increasing with g(1) > 0.
    let g = |s: f64| s.ln() + 2.0 * s * t;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut s = (1.0 / (2.0 * t)).min(0.5);
    for _ in 0..200 {
        let gs = g(s);
        if gs == 0.0 {
            break;
        }
        if gs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let next = s - gs / (1.0 / s + 2.0 * t);
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-16 * s {
            s = next;
            break;
        }
        s = next;
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    pub t: f64,
    pub s: f64,
    pub distance: f64,
    /// Local slope of log distance against log s from the previous row.
    pub slope: f64,
}

/// Distance from f_t(nu_t) to Phi0(ie) with nu_t = s(t) Phi0(h + ie + if).
pub fn convergence_probe(alg: &RealSemisimpleAlgebra, phi0: &SlHom, ts: &[f64]) -> Result<Vec<ProbeRow>> {
    let target = phi0.e.mul_i();
    let base = phi0.eval([ci(0.0, 1.0), ci(0.0, 1.0), ci(1.0, 0.0)]);
    let mut rows: Vec<ProbeRow> = Vec::with_capacity(ts.len());
    for &t in ts {
        let s = solve_s_of_t(t)?;
        let ft = deformation_flow(alg, &base.scale(s), t)?;
        let distance = alg.norm(&(&ft - &target));
        let slope = match rows.last() {
            Some(p) if p.s != s && p.distance > 0.0 && distance > 0.0 => {
                (distance.ln() - p.distance.ln()) / (s.ln() - p.s.ln())
            }
            _ => f64::NAN,
        };
        rows.push(ProbeRow { t, s, distance, slope });
    }
    Ok(rows)
}

/// The normal slice N(nu, a) = { Ad(exp i xi) nu : xi in q(nu) real, |xi| < a }.
#[derive(Clone, Debug)]
pub struct NormalSlice {
    pub nu: GVector,
    pub phi0: SlHom,
    pub radius: f64,
    /// Real basis of q(nu) = sum over r >= 1, l < r of g(r, l), orthonormal for inner.
    pub q_basis: nalgebra::DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SliceHit {
    pub hit: bool,
    pub xi: GVector,
    pub coords: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub fn normal_slice(alg: &RealSemisimpleAlgebra, nu: &GVector, radius: f64) -> Result<NormalSlice> {
    if !(radius > 0.0) {
        return Err(OrbitError::InvalidParams("slice radius must be positive".into()));
    }
    let phi0 = morphism_from_gr_core(alg, nu, 1e-9)?;
    let dec = sl2kit::isotypic(alg, &phi0)?;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for b in &dec.blocks {
        if b.r >= 1 && b.l < b.r as i64 {
            cols.extend(b.basis.column_iter().map(|c| c.into_owned()));
        }
    }
    let raw = if cols.is_empty() { nalgebra::DMatrix::zeros(alg.dim(), 0) } else { nalgebra::DMatrix::from_columns(&cols) };
    let q_basis = linalg::orthonormalize(&raw, alg.gram(), 1e-10);
    Ok(NormalSlice { nu: nu.clone(), phi0, radius, q_basis })
}

impl NormalSlice {
    pub fn dim(&self) -> usize {
        self.q_basis.ncols()
    }

    pub fn point(&self, alg: &RealSemisimpleAlgebra, coords: &[f64]) -> GVector {
        let xi = GVector::real(&self.q_basis * DVector::from_column_slice(coords));
        alg.adjoint_exp(&xi.mul_i(), &self.nu)
    }

    /// Solves Ad(exp i xi) nu = point for xi in q(nu) by Gauss-Newton; a hit
    /// needs a residual below tol and |xi| < radius.
    pub fn hit_test(&self, alg: &RealSemisimpleAlgebra, point: &GVector, tol: f64) -> Result<SliceHit> {
        alg.ensure_dim(point)?;
        let d = self.dim();
        let resid = |c: &DVector<f64>| (&self.point(alg, c.as_slice()) - point).to_stacked();
        let mut c = DVector::zeros(d);
        let mut r = resid(&c);
        let mut it = 0;
        let step_h = 1e-7;
        let target = tol.min(1e-13);
        while r.amax() > target && it < 60 {
            it += 1;
            let mut jac = nalgebra::DMatrix::zeros(r.len(), d);
            for j in 0..d {
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp[j] += step_h;
                cm[j] -= step_h;
                jac.set_column(j, &((resid(&cp) - resid(&cm)) / (2.0 * step_h)));
            }
            let step = -linalg::lstsq(&jac, &r, 1e-12);
            if step.amax() < 1e-15 {
                break;
            }
            let mut lam = 1.0;
            let mut moved = false;
            while lam > 1e-6 {
                let cand = &c + &step * lam;
                let rc = resid(&cand);
                if rc.norm() < r.norm() {
                    c = cand;
                    r = rc;
                    moved = true;
                    break;
                }
                lam *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let xi = GVector::real(&self.q_basis * &c);
        let residual = r.amax();
        let hit = residual <= tol && alg.norm(&xi) < self.radius;
        Ok(SliceHit { hit, xi, coords: c.iter().copied().collect(), residual, iterations: it })
    }
}
