//! sl2-triples, linear maps s -> g, isotypic decompositions and the normal
//! space basis attached to a morphism.

use crate::algebra::{sl_coords, RealSemisimpleAlgebra, DEFAULT_TOL};
use crate::element::GVector;
use crate::error::{OrbitError, Result};
use crate::linalg;
use crate::moment;
use nalgebra::{Complex, DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Matrices of ad e, ad f, ad h on s in the basis (e, f, h).
pub fn ad_s() -> [Matrix3<f64>; 3] {
    let ade = Matrix3::new(0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let adf = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 2.0, -1.0, 0.0, 0.0);
    let adh = Matrix3::new(2.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0);
    [ade, adf, adh]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sl2Triple {
    pub e: GVector,
    pub f: GVector,
    pub h: GVector,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TripleResiduals {
    pub he: f64,
    pub hf: f64,
    pub ef: f64,
}

impl TripleResiduals {
    pub fn max(&self) -> f64 {
        self.he.max(self.hf).max(self.ef)
    }
}

impl Sl2Triple {
    pub fn residuals(&self, alg: &RealSemisimpleAlgebra) -> TripleResiduals {
        let he = alg.norm(&(&alg.bracket(&self.h, &self.e) - &self.e.scale(2.0)));
        let hf = alg.norm(&(&alg.bracket(&self.h, &self.f) + &self.f.scale(2.0)));
        let ef = alg.norm(&(&alg.bracket(&self.e, &self.f) - &self.h));
        TripleResiduals { he, hf, ef }
    }

    /// theta e = -f and theta h = -h.
    pub fn is_strictly_normal(&self, alg: &RealSemisimpleAlgebra, tol: f64) -> bool {
        let r1 = alg.norm(&(&alg.theta_apply(&self.e) + &self.f));
        let r2 = alg.norm(&(&alg.theta_apply(&self.h) + &self.h));
        r1 < tol && r2 < tol
    }

    pub fn to_hom(&self, alg: &RealSemisimpleAlgebra) -> SlHom {
        SlHom::with_flags(alg, self.e.clone(), self.f.clone(), self.h.clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HomFlags {
    pub real: bool,
    pub theta_compatible: bool,
    pub sigma_compatible: Option<bool>,
}

/// Linear map s -> g stored by its values on e, f, h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlHom {
    pub e: GVector,
    pub f: GVector,
    pub h: GVector,
    pub flags: HomFlags,
}

impl SlHom {
    pub fn new(e: GVector, f: GVector, h: GVector) -> Self {
        Self { e, f, h, flags: HomFlags::default() }
    }

    pub fn with_flags(alg: &RealSemisimpleAlgebra, e: GVector, f: GVector, h: GVector) -> Self {
        let mut out = Self::new(e, f, h);
        out.refresh_flags(alg, DEFAULT_TOL);
        out
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(GVector::zeros(n), GVector::zeros(n), GVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.e.dim()
    }

    pub fn values(&self) -> [&GVector; 3] {
        [&self.e, &self.f, &self.h]
    }

    pub fn from_values(v: [GVector; 3]) -> Self {
        let [e, f, h] = v;
        Self::new(e, f, h)
    }

    pub fn refresh_flags(&mut self, alg: &RealSemisimpleAlgebra, tol: f64) {
        self.flags.real = self.values().iter().all(|v| v.is_real(tol));
        self.flags.theta_compatible = self.theta_residual(alg) < tol * (1.0 + self.amax());
    }

    /// Residual of theta(Phi(x)) = Phi(theta_s x).
    pub fn theta_residual(&self, alg: &RealSemisimpleAlgebra) -> f64 {
        let r1 = (&alg.theta_apply(&self.e) + &self.f).amax();
        let r2 = (&alg.theta_apply(&self.f) + &self.e).amax();
        let r3 = (&alg.theta_apply(&self.h) + &self.h).amax();
        r1.max(r2).max(r3)
    }

    pub fn amax(&self) -> f64 {
        self.e.amax().max(self.f.amax()).max(self.h.amax())
    }

    pub fn map(&self, g: impl Fn(&GVector) -> GVector) -> Self {
        Self { e: g(&self.e), f: g(&self.f), h: g(&self.h), flags: self.flags }
    }

    pub fn zip(&self, o: &Self, g: impl Fn(&GVector, &GVector) -> GVector) -> Self {
        Self::new(g(&self.e, &o.e), g(&self.f, &o.f), g(&self.h, &o.h))
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v.scale(c))
    }

    pub fn axpy(&mut self, c: f64, o: &Self) {
        self.e.axpy(c, &o.e);
        self.f.axpy(c, &o.f);
        self.h.axpy(c, &o.h);
    }

    /// Phi(c_e e + c_f f + c_h h).
    pub fn eval(&self, c: [Complex<f64>; 3]) -> GVector {
        let mut out = self.e.scale_c(c[0]);
        out = &out + &self.f.scale_c(c[1]);
        &out + &self.h.scale_c(c[2])
    }

    pub fn eval_real(&self, c: [f64; 3]) -> GVector {
        let mut out = self.e.scale(c[0]);
        out.axpy(c[1], &self.f);
        out.axpy(c[2], &self.h);
        out
    }

    /// Phi composed with a linear map of s given as a 3x3 matrix in (e, f, h).
    pub fn compose_s(&self, m: &Matrix3<f64>) -> Self {
        let col = |j: usize| self.eval_real([m[(0, j)], m[(1, j)], m[(2, j)]]);
        Self::new(col(0), col(1), col(2))
    }

    /// Inner product with weights 1/2, 1/2, 1/4 on the values at e, f, h.
    pub fn inner(&self, alg: &RealSemisimpleAlgebra, o: &Self) -> f64 {
        0.5 * alg.inner(&self.e, &o.e).re + 0.5 * alg.inner(&self.f, &o.f).re + 0.25 * alg.inner(&self.h, &o.h).re
    }

    pub fn norm(&self, alg: &RealSemisimpleAlgebra) -> f64 {
        self.inner(alg, self).max(0.0).sqrt()
    }

    pub fn to_triple(&self) -> Sl2Triple {
        Sl2Triple { e: self.e.clone(), f: self.f.clone(), h: self.h.clone() }
    }

    pub fn to_stacked(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(6 * n);
        for (b, x) in self.values().iter().enumerate() {
            v.rows_mut(2 * n * b, 2 * n).copy_from(&x.to_stacked());
        }
        v
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 6;
        let g = |b: usize| GVector::from_stacked(&v.rows(2 * n * b, 2 * n).into_owned());
        Self::new(g(0), g(1), g(2))
    }
}

/// The identity embedding of s = sl(2) into the algebra sl(2,R) built by
/// `RealSemisimpleAlgebra::sl_n_r(2)`.
pub fn sl2_identity(alg: &RealSemisimpleAlgebra) -> SlHom {
    SlHom::with_flags(alg, alg.basis_vector(0), alg.basis_vector(1), alg.basis_vector(2))
}

/// Strictly normal triple in sl(n,R) (basis of `sl_n_r`) attached to a
/// partition of n: one symmetric Jordan block per part, placed along the
/// diagonal.
pub fn sl_partition_triple(n: usize, partition: &[usize]) -> Result<Sl2Triple> {
    if partition.iter().sum::<usize>() != n || partition.contains(&0) {
        return Err(OrbitError::InvalidParams(format!("{partition:?} is not a partition of {n}")));
    }
    let mut e = DMatrix::zeros(n, n);
    let mut h = DMatrix::zeros(n, n);
    let mut off = 0;
    for &d in partition {
        for i in 0..d {
            h[(off + i, off + i)] = (d as f64) - 1.0 - 2.0 * i as f64;
            if i + 1 < d {
                e[(off + i, off + i + 1)] = (((i + 1) * (d - 1 - i)) as f64).sqrt();
            }
        }
        off += d;
    }
    let f = e.transpose();
    Ok(Sl2Triple {
        e: GVector::real(sl_coords(&e)),
        f: GVector::real(sl_coords(&f)),
        h: GVector::real(sl_coords(&h)),
    })
}

/// Triple in sl(n,R) from explicit real matrices.
pub fn sl_triple_from_matrices(e: &DMatrix<f64>, f: &DMatrix<f64>, h: &DMatrix<f64>) -> Sl2Triple {
    Sl2Triple {
        e: GVector::real(sl_coords(e)),
        f: GVector::real(sl_coords(f)),
        h: GVector::real(sl_coords(h)),
    }
}

fn require_real_nonzero(alg: &RealSemisimpleAlgebra, zeta: &GVector) -> Result<()> {
    alg.ensure_dim(zeta)?;
    if zeta.amax() == 0.0 {
        return Err(OrbitError::ZeroElement);
    }
    if !zeta.is_real(0.0) {
        return Err(OrbitError::InvalidParams("element must be real".into()));
    }
    Ok(())
}

/// Completes a real nilpotent element to an sl2-triple: first h in the image
/// of ad zeta with [h, zeta] = 2 zeta (minimum norm), then the unique f.
pub fn jacobson_morozov(alg: &RealSemisimpleAlgebra, zeta: &GVector, tol: f64) -> Result<Sl2Triple> {
    require_real_nonzero(alg, zeta)?;
    let nil = alg.nilpotency_residual(zeta);
    if nil > 1e-8 {
        return Err(OrbitError::NotNilpotent(nil));
    }
    let a = alg.op_to_on(&alg.ad_real(&zeta.re));
    let z = alg.to_on(&zeta.re);
    let scale = a.amax().max(1.0);
    let u = linalg::column_space(&a, 1e-10);
    let au = &a * &u;
    let c = linalg::lstsq(&au, &(-&z * 2.0), 1e-10);
    let h = &u * c;
    let r1 = (&a * &h + &z * 2.0).amax();
    if r1 > tol * scale * (1.0 + z.amax()) {
        return Err(OrbitError::NoSolution(format!("no h with [h, zeta] = 2 zeta (residual {r1:.3e})")));
    }
    let n = alg.dim();
    let hm = alg.op_to_on(&alg.ad_real(&alg.from_on(&h)));
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.rows_mut(0, n).copy_from(&a);
    stacked.rows_mut(n, n).copy_from(&(hm + DMatrix::identity(n, n) * 2.0));
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(&h);
    let f = linalg::lstsq(&stacked, &rhs, 1e-10);
    let r2 = (&stacked * &f - rhs).amax();
    if r2 > tol * scale * (1.0 + h.amax()) {
        return Err(OrbitError::NoSolution(format!("no f completing the triple (residual {r2:.3e})")));
    }
    let t = Sl2Triple {
        e: zeta.clone(),
        f: GVector::real(alg.from_on(&f)),
        h: GVector::real(alg.from_on(&h)),
    };
    let res = t.residuals(alg).max();
    if res > tol.max(1e-9) * (1.0 + scale) {
        return Err(OrbitError::NoSolution(format!("triple residual {res:.3e}")));
    }
    Ok(t)
}

/// Strictly normal triple from a critical point: rescale so that a = -2, then
/// h = -[zeta, theta zeta] and f = -theta zeta.
pub fn strictly_normal_from_critical(alg: &RealSemisimpleAlgebra, zeta: &GVector, tol: f64) -> Result<Sl2Triple> {
    require_real_nonzero(alg, zeta)?;
    let crit = moment::is_critical(alg, zeta, tol)?;
    if !crit.critical {
        return Err(OrbitError::NotCritical { residual: crit.residual, a: crit.a });
    }
    let c = (-2.0 / crit.a).sqrt();
    let e = zeta.scale(c);
    let te = alg.theta_apply(&e);
    let h = alg.bracket(&e, &te).scale(-1.0);
    let f = te.scale(-1.0);
    Ok(Sl2Triple { e, f, h })
}

/// Same construction for a complex critical point (used on the p side):
/// returns the morphism Psi with Psi(e) = c zeta, Psi(f) = -tau(c zeta).
pub fn normal_hom_from_complex_critical(alg: &RealSemisimpleAlgebra, zeta: &GVector, tol: f64) -> Result<SlHom> {
    alg.ensure_dim(zeta)?;
    let crit = moment::is_critical(alg, zeta, tol)?;
    if !crit.critical {
        return Err(OrbitError::NotCritical { residual: crit.residual, a: crit.a });
    }
    let c = (-2.0 / crit.a).sqrt();
    let e = zeta.scale(c);
    let f = alg.tau(&e).scale(-1.0);
    let h = alg.bracket(&e, &f);
    Ok(SlHom::new(e, f, h))
}

/// Copy of the algebra with the Killing form rescaled so that B(h, h) = 2.
pub fn normalize_for_orbit(alg: &RealSemisimpleAlgebra, triple: &Sl2Triple) -> Result<RealSemisimpleAlgebra> {
    alg.ensure_dim(&triple.h)?;
    let b0 = (alg.killing(&triple.h, &triple.h) / alg.killing_scale()).re;
    if !(b0 > 0.0) {
        return Err(OrbitError::DegenerateKilling(b0));
    }
    let scale = 2.0 / b0;
    if (scale - alg.killing_scale()).abs() <= 1e-12 * scale {
        return Ok(alg.clone());
    }
    alg.with_killing_scale(scale)
}

/// Normalizes the algebra for the orbit of a real nilpotent element.
pub fn normalized_for_element(alg: &RealSemisimpleAlgebra, zeta: &GVector) -> Result<RealSemisimpleAlgebra> {
    let t = jacobson_morozov(alg, zeta, DEFAULT_TOL)?;
    normalize_for_orbit(alg, &t)
}

// ---------------------------------------------------------------------------
// Isotypic decomposition

#[derive(Clone, Debug)]
pub struct IsoBlock {
    pub r: usize,
    pub l: i64,
    /// Columns: basis of g(r, l), orthonormal under the inner product.
    pub basis: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct IsotypicDecomposition {
    pub token: u64,
    pub blocks: Vec<IsoBlock>,
    /// Occurring highest weights, ascending.
    pub rs: Vec<usize>,
    r_basis: BTreeMap<usize, DMatrix<f64>>,
    gram: DMatrix<f64>,
    omega: DMatrix<f64>,
    ad_e: DMatrix<f64>,
    ad_f: DMatrix<f64>,
    ad_h: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct BlockJson {
    pub r: usize,
    pub l: i64,
    pub basis: Vec<GVector>,
}

impl IsotypicDecomposition {
    pub fn dims(&self) -> BTreeMap<usize, usize> {
        self.r_basis.iter().map(|(r, b)| (*r, b.ncols())).collect()
    }

    pub fn dim_rl(&self, r: usize, l: i64) -> usize {
        self.blocks.iter().find(|b| b.r == r && b.l == l).map(|b| b.basis.ncols()).unwrap_or(0)
    }

    pub fn r_basis(&self, r: usize) -> Option<&DMatrix<f64>> {
        self.r_basis.get(&r)
    }

    /// Orthogonal projector onto g(r) (zero if r does not occur).
    pub fn projector(&self, r: usize) -> DMatrix<f64> {
        match self.r_basis.get(&r) {
            Some(w) => w * (w.transpose() * &self.gram),
            None => DMatrix::zeros(self.gram.nrows(), self.gram.ncols()),
        }
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// ad Phi0(e), ad Phi0(f), ad Phi0(h).
    pub fn ads(&self) -> [&DMatrix<f64>; 3] {
        [&self.ad_e, &self.ad_f, &self.ad_h]
    }

    pub fn to_json(&self) -> Vec<BlockJson> {
        self.blocks
            .iter()
            .map(|b| BlockJson {
                r: b.r,
                l: b.l,
                basis: (0..b.basis.ncols()).map(|j| GVector::real(b.basis.column(j).into_owned())).collect(),
            })
            .collect()
    }
}

fn require_real_morphism(alg: &RealSemisimpleAlgebra, phi0: &SlHom, tol: f64) -> Result<()> {
    alg.ensure_dim(&phi0.e)?;
    if !phi0.values().iter().all(|v| v.is_real(tol)) {
        return Err(OrbitError::InvalidParams("morphism must be real".into()));
    }
    let res = phi0.to_triple().residuals(alg).max();
    if res > tol * (1.0 + phi0.amax()) {
        return Err(OrbitError::InvalidParams(format!("not a morphism (residual {res:.3e})")));
    }
    if phi0.theta_residual(alg) > tol * (1.0 + phi0.amax()) {
        return Err(OrbitError::InvalidParams("morphism is not theta-compatible".into()));
    }
    Ok(())
}

/// Simultaneous eigendecomposition of the Casimir and ad h.
pub fn isotypic(alg: &RealSemisimpleAlgebra, phi0: &SlHom) -> Result<IsotypicDecomposition> {
    require_real_morphism(alg, phi0, 1e-8)?;
    let ad_e = alg.ad_real(&phi0.e.re);
    let ad_f = alg.ad_real(&phi0.f.re);
    let ad_h = alg.ad_real(&phi0.h.re);
    let omega = (&ad_e * &ad_f + &ad_f * &ad_e) * 2.0 + &ad_h * &ad_h;
    let (vals, vecs) = linalg::sym_eigen_sorted(&alg.op_to_on(&omega));
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut worst: f64 = 0.0;
    for (i, &lam) in vals.iter().enumerate() {
        let r = (-1.0 + (1.0 + lam.max(0.0)).sqrt()).round().max(0.0) as usize;
        let dev = (lam - (r * r + 2 * r) as f64).abs() / (1.0 + lam.abs());
        worst = worst.max(dev);
        groups.entry(r).or_default().push(i);
    }
    if worst > 1e-7 {
        return Err(OrbitError::NonIntegerWeights(worst));
    }
    let adh_on = alg.op_to_on(&ad_h);
    let mut blocks = Vec::new();
    let mut r_basis = BTreeMap::new();
    for (&r, idx) in &groups {
        let v = DMatrix::from_fn(vals.len(), idx.len(), |i, j| vecs[(i, idx[j])]);
        let restricted = v.transpose() * &adh_on * &v;
        let (lv, lvec) = linalg::sym_eigen_sorted(&restricted);
        let mut by_l: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in lv.iter().enumerate() {
            let li = l.round();
            let dev = (l - li).abs();
            if dev > 1e-7 {
                return Err(OrbitError::NonIntegerWeights(dev));
            }
            by_l.entry(li as i64).or_default().push(i);
        }
        for (l, li) in by_l {
            let cols = DMatrix::from_fn(lv.len(), li.len(), |i, j| lvec[(i, li[j])]);
            let on = &v * cols;
            blocks.push(IsoBlock { r, l, basis: alg.frame() * on });
        }
        r_basis.insert(r, alg.frame() * &v);
    }
    Ok(IsotypicDecomposition {
        token: alg.token(),
        rs: groups.keys().copied().collect(),
        blocks,
        r_basis,
        gram: alg.gram().clone(),
        omega,
        ad_e,
        ad_f,
        ad_h,
    })
}

/// Cross term X(Phi)(u) = ad e Phi([f,u]) + ad f Phi([e,u]) + 1/2 ad h Phi([h,u]).
/// On Hom(s, g(r))(w) it acts by (r^2 + 2r + 8 - w^2 - 2w) / 4.
pub fn cross_term(dec: &IsotypicDecomposition, phi: &SlHom) -> SlHom {
    let [se, sf, sh] = ad_s();
    let [ae, af, ah] = dec.ads();
    let pf = phi.compose_s(&sf);
    let pe = phi.compose_s(&se);
    let ph = phi.compose_s(&sh);
    let ap = |m: &DMatrix<f64>, x: &GVector| RealSemisimpleAlgebra::apply_real(m, x);
    let val = |a: &GVector, b: &GVector, c: &GVector| -> GVector {
        let mut out = ap(ae, a);
        out = &out + &ap(af, b);
        out.axpy(0.5, &ap(ah, c));
        out
    };
    SlHom::new(val(&pf.e, &pe.e, &ph.e), val(&pf.f, &pe.f, &ph.f), val(&pf.h, &pe.h, &ph.h))
}

/// Residual of (r+2) Phi = X(Phi), the membership test for Hom(s, g(r))(r-2).
pub fn membership_residual(alg: &RealSemisimpleAlgebra, dec: &IsotypicDecomposition, phi: &SlHom, r: usize) -> f64 {
    let x = cross_term(dec, phi);
    let d = phi.scale(r as f64 + 2.0).sub(&x);
    d.norm(alg)
}

fn casimir_value(w: i64) -> f64 {
    (w * w + 2 * w) as f64
}

/// Weights w of Hom(s, g(r)) under the diagonal action.
pub fn diagonal_weights(r: usize) -> Vec<i64> {
    let r = r as i64;
    match r {
        0 => vec![2],
        1 => vec![1, 3],
        _ => vec![r - 2, r, r + 2],
    }
}

/// Projection of Phi onto Hom(s, g(r))(w).
pub fn hom_diag_component(
    alg: &RealSemisimpleAlgebra,
    dec: &IsotypicDecomposition,
    phi: &SlHom,
    r: usize,
    w: i64,
) -> Result<SlHom> {
    if dec.token != alg.token() {
        return Err(OrbitError::AlgebraMismatch);
    }
    if !dec.rs.contains(&r) {
        return Err(OrbitError::InvalidIsotype(r));
    }
    let ws = diagonal_weights(r);
    if !ws.contains(&w) {
        return Err(OrbitError::InvalidParams(format!("weight {w} does not occur in Hom(s, g({r}))")));
    }
    let p = dec.projector(r);
    let mut cur = phi.map(|v| RealSemisimpleAlgebra::apply_real(&p, v));
    // Diagonal Casimir = c_r + 8 - 4 X on Hom(s, g(r)).
    let cr = casimir_value(r as i64);
    for &w2 in &ws {
        if w2 == w {
            continue;
        }
        let x = cross_term(dec, &cur);
        let omega = cur.scale(cr + 8.0).sub(&x.scale(4.0));
        let shifted = omega.sub(&cur.scale(casimir_value(w2)));
        cur = shifted.scale(1.0 / (casimir_value(w) - casimir_value(w2)));
    }
    cur.refresh_flags(alg, DEFAULT_TOL);
    Ok(cur)
}

/// Phi in Hom^{R,theta}(s, g(r))(r-2) attached to xi in p_R intersected with g(r).
pub fn phi_from_xi(
    alg: &RealSemisimpleAlgebra,
    dec: &IsotypicDecomposition,
    phi0: &SlHom,
    xi: &GVector,
    r: usize,
) -> Result<(SlHom, GVector)> {
    if r == 0 {
        return Err(OrbitError::InvalidParams("r must be positive".into()));
    }
    alg.ensure_dim(xi)?;
    if !xi.is_real(1e-12) || !alg.is_in_p(xi, 1e-9) {
        return Err(OrbitError::InvalidParams("xi must be a real element of p".into()));
    }
    let p = dec.projector(r);
    let off = (&RealSemisimpleAlgebra::apply_real(&p, xi) - xi).amax();
    if off > 1e-9 * (1.0 + xi.amax()) {
        return Err(OrbitError::InvalidParams(format!("xi has components outside g({r}) ({off:.3e})")));
    }
    let rf = r as f64;
    let adh = |x: &GVector| alg.bracket(&phi0.h, x);
    let eta = adh(xi).scale(1.0 / rf);
    let mut h = xi.scale(-rf);
    h.axpy(1.0 / (rf + 2.0), &adh(&adh(xi)));
    h.axpy(2.0 / (rf + 2.0), &adh(&eta));
    let e = alg.bracket(&phi0.e, &(xi + &eta));
    let f = alg.theta_apply(&e).scale(-1.0);
    Ok((SlHom::with_flags(alg, e, f, h), eta))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalDirection {
    pub r: usize,
    pub hom: SlHom,
}

/// Basis of d_R(Phi0) = sum over r >= 2 of Hom^{R,theta}(s, g(r))(r-2), built
/// from p_R intersected with g(r) and orthonormalized per r.
pub fn normal_space_basis(
    alg: &RealSemisimpleAlgebra,
    dec: &IsotypicDecomposition,
    phi0: &SlHom,
) -> Result<Vec<NormalDirection>> {
    let mut out = Vec::new();
    let pb = alg.p_basis();
    for &r in dec.rs.iter().filter(|&&r| r >= 2) {
        let proj = dec.projector(r) * pb;
        let xis = linalg::orthonormalize(&proj, alg.gram(), 1e-8);
        let mut homs: Vec<SlHom> = Vec::new();
        for j in 0..xis.ncols() {
            let xi = GVector::real(xis.column(j).into_owned());
            let (mut phi, _) = phi_from_xi(alg, dec, phi0, &xi, r)?;
            for _ in 0..2 {
                for u in &homs {
                    let c = phi.inner(alg, u);
                    phi.axpy(-c, u);
                }
            }
            let nrm = phi.norm(alg);
            if nrm > 1e-8 {
                let mut phi = phi.scale(1.0 / nrm);
                phi.refresh_flags(alg, DEFAULT_TOL);
                homs.push(phi);
            }
        }
        out.extend(homs.into_iter().map(|hom| NormalDirection { r, hom }));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ComplementReport {
    pub rank_ek_plus_images: usize,
    pub rank_eg: usize,
    pub rank_images: usize,
    pub n_images: usize,
    pub smallest_angle: f64,
}

impl ComplementReport {
    pub fn holds(&self) -> bool {
        self.rank_ek_plus_images == self.rank_eg && self.rank_images == self.n_images && self.smallest_angle > 1e-6
    }
}

/// Checks that the evaluations at e of the normal basis complement [e, k] in [e, g].
pub fn complement_report(alg: &RealSemisimpleAlgebra, phi0: &SlHom, basis: &[NormalDirection]) -> ComplementReport {
    let a = alg.op_to_on(&alg.ad_real(&phi0.e.re));
    let ek = &a * alg.frame_inv() * alg.k_basis();
    let eg = a.clone();
    let imgs: Vec<DVector<f64>> = basis.iter().map(|d| alg.to_on(&d.hom.e.re)).collect();
    let im = if imgs.is_empty() { DMatrix::zeros(alg.dim(), 0) } else { DMatrix::from_columns(&imgs) };
    let mut both = DMatrix::zeros(alg.dim(), ek.ncols() + im.ncols());
    both.columns_mut(0, ek.ncols()).copy_from(&ek);
    both.columns_mut(ek.ncols(), im.ncols()).copy_from(&im);
    let tol = 1e-9;
    let angle = linalg::smallest_principal_angle(&linalg::column_space(&ek, tol), &linalg::column_space(&im, tol));
    ComplementReport {
        rank_ek_plus_images: linalg::rank(&both, tol),
        rank_eg: linalg::rank(&eg, tol),
        rank_images: linalg::rank(&im, tol),
        n_images: im.ncols(),
        smallest_angle: angle,
    }
}

// ---------------------------------------------------------------------------
// Coordinates on spaces of real linear maps s -> g_R

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HomKind {
    /// Hom^R(s, g): arbitrary real values on e, f, h.
    Real,
    /// Hom^{R,theta}(s, g): Phi(f) = -theta Phi(e), Phi(h) in p_R.
    RealTheta,
}

#[derive(Clone, Debug)]
pub struct HomSpace {
    pub kind: HomKind,
    n: usize,
    p_basis: DMatrix<f64>,
    p_coord: DMatrix<f64>,
    theta: DMatrix<f64>,
}

impl HomSpace {
    pub fn new(alg: &RealSemisimpleAlgebra, kind: HomKind) -> Self {
        let pb = alg.p_basis().clone();
        let p_coord = pb.transpose() * alg.gram();
        Self { kind, n: alg.dim(), p_basis: pb, p_coord, theta: alg.theta().clone() }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            HomKind::Real => 3 * self.n,
            HomKind::RealTheta => self.n + self.p_basis.ncols(),
        }
    }

    pub fn to_coords(&self, phi: &SlHom) -> DVector<f64> {
        let n = self.n;
        match self.kind {
            HomKind::Real => {
                let mut v = DVector::zeros(3 * n);
                v.rows_mut(0, n).copy_from(&phi.e.re);
                v.rows_mut(n, n).copy_from(&phi.f.re);
                v.rows_mut(2 * n, n).copy_from(&phi.h.re);
                v
            }
            HomKind::RealTheta => {
                let dp = self.p_basis.ncols();
                let mut v = DVector::zeros(n + dp);
                v.rows_mut(0, n).copy_from(&phi.e.re);
                v.rows_mut(n, dp).copy_from(&(&self.p_coord * &phi.h.re));
                v
            }
        }
    }

    pub fn from_coords(&self, v: &DVector<f64>) -> SlHom {
        let n = self.n;
        match self.kind {
            HomKind::Real => SlHom::new(
                GVector::real(v.rows(0, n).into_owned()),
                GVector::real(v.rows(n, n).into_owned()),
                GVector::real(v.rows(2 * n, n).into_owned()),
            ),
            HomKind::RealTheta => {
                let dp = self.p_basis.ncols();
                let e = v.rows(0, n).into_owned();
                let f = -(&self.theta * &e);
                let h = &self.p_basis * v.rows(n, dp);
                let mut out = SlHom::new(GVector::real(e), GVector::real(f), GVector::real(h));
                out.flags.real = true;
                out.flags.theta_compatible = true;
                out
            }
        }
    }

    pub fn basis_hom(&self, j: usize) -> SlHom {
        let mut v = DVector::zeros(self.dim());
        v[j] = 1.0;
        self.from_coords(&v)
    }

    /// Matrix of a linear operator on the space.
    pub fn matrix_of(&self, op: impl Fn(&SlHom) -> SlHom) -> DMatrix<f64> {
        let d = self.dim();
        let cols: Vec<DVector<f64>> = (0..d).map(|j| self.to_coords(&op(&self.basis_hom(j)))).collect();
        DMatrix::from_columns(&cols)
    }
}
