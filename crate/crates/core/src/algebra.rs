//! Real semisimple Lie algebras given by structure constants and a Cartan
//! involution, together with their complexification.

use crate::element::GVector;
use crate::error::{OrbitError, Result};
use crate::linalg;
use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_TOL: f64 = 1e-9;

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

fn fresh_token() -> u64 {
    NEXT_TOKEN.fetch_add(1, Ordering::Relaxed)
}

pub type CMatrix = DMatrix<Complex<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    SlR,
    Su,
    So,
}

#[derive(Clone, Debug)]
pub struct RealSemisimpleAlgebra {
    name: String,
    basis_names: Vec<String>,
    dim: usize,
    /// Dense table, `c[(i * dim + j) * dim + k]`.
    structure: Vec<f64>,
    ad: Vec<DMatrix<f64>>,
    theta: DMatrix<f64>,
    killing_scale: f64,
    raw_killing: DMatrix<f64>,
    gram: DMatrix<f64>,
    /// Columns orthonormal under `inner`; `frame_inv = frame^{-1}`.
    frame: DMatrix<f64>,
    frame_inv: DMatrix<f64>,
    k_basis: DMatrix<f64>,
    p_basis: DMatrix<f64>,
    token: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgebraJson {
    pub name: String,
    pub dim: usize,
    pub basis: Vec<String>,
    pub brackets: Vec<(usize, usize, usize, f64)>,
    pub theta: Vec<Vec<f64>>,
    pub killing_scale: f64,
}

/// Residuals of the defining invariants, as reported by `check`.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub antisymmetry: f64,
    pub jacobi: f64,
    pub theta_involution: f64,
    pub theta_automorphism: f64,
    pub killing_k_max: f64,
    pub killing_p_min: f64,
    pub gram_min_eig: f64,
    pub dim_k: usize,
    pub dim_p: usize,
}

impl InvariantReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.antisymmetry <= tol
            && self.jacobi <= tol
            && self.theta_involution <= tol
            && self.theta_automorphism <= tol
            && (self.dim_k == 0 || self.killing_k_max < 0.0)
            && (self.dim_p == 0 || self.killing_p_min > 0.0)
            && self.gram_min_eig > 0.0
    }
}

fn snap(x: f64) -> f64 {
    let r = (2.0 * x).round() / 2.0;
    if (x - r).abs() < 1e-12 {
        r
    } else {
        x
    }
}

impl RealSemisimpleAlgebra {
    /// Builds an algebra from a dense structure table, validating invariants.
    pub fn from_structure(
        name: &str,
        basis_names: Vec<String>,
        structure: Vec<f64>,
        theta: DMatrix<f64>,
        killing_scale: f64,
        tol: f64,
    ) -> Result<Self> {
        let dim = basis_names.len();
        if dim == 0 {
            return Err(OrbitError::InvalidParams("empty basis".into()));
        }
        if structure.len() != dim * dim * dim {
            return Err(OrbitError::DimensionMismatch { expected: dim * dim * dim, got: structure.len() });
        }
        if theta.shape() != (dim, dim) {
            return Err(OrbitError::DimensionMismatch { expected: dim, got: theta.nrows() });
        }
        if !(killing_scale > 0.0 && killing_scale.is_finite()) {
            return Err(OrbitError::InvalidParams(format!("killing_scale {killing_scale}")));
        }
        let ad: Vec<DMatrix<f64>> = (0..dim)
            .map(|i| DMatrix::from_fn(dim, dim, |k, j| structure[(i * dim + j) * dim + k]))
            .collect();
        let raw_killing = DMatrix::from_fn(dim, dim, |i, j| (&ad[i] * &ad[j]).trace());
        let mut alg = Self {
            name: name.to_string(),
            basis_names,
            dim,
            structure,
            ad,
            theta,
            killing_scale,
            raw_killing,
            gram: DMatrix::zeros(0, 0),
            frame: DMatrix::zeros(0, 0),
            frame_inv: DMatrix::zeros(0, 0),
            k_basis: DMatrix::zeros(0, 0),
            p_basis: DMatrix::zeros(0, 0),
            token: fresh_token(),
        };
        let report = alg.structural_report();
        if report.antisymmetry > tol
            || report.jacobi > tol
            || report.theta_involution > tol
            || report.theta_automorphism > tol
        {
            return Err(OrbitError::InvariantFailure(format!("{report:?}")));
        }
        alg.finish(tol)?;
        Ok(alg)
    }

    fn finish(&mut self, tol: f64) -> Result<()> {
        let n = self.dim;
        let g = -(&self.raw_killing * &self.theta) * self.killing_scale;
        let g = (&g + g.transpose()) * 0.5;
        let chol = g.clone().cholesky().ok_or_else(|| {
            OrbitError::InvariantFailure("inner product -B(x, theta y) is not positive definite".into())
        })?;
        let l = chol.l();
        let frame_inv = l.transpose();
        let frame = frame_inv
            .clone()
            .try_inverse()
            .ok_or_else(|| OrbitError::InvariantFailure("singular Gram matrix".into()))?;
        let id = DMatrix::<f64>::identity(n, n);
        let kp = linalg::column_space(&((&id + &self.theta) * 0.5), tol);
        let pp = linalg::column_space(&((&id - &self.theta) * 0.5), tol);
        self.k_basis = linalg::orthonormalize(&kp, &g, tol);
        self.p_basis = linalg::orthonormalize(&pp, &g, tol);
        self.gram = g;
        self.frame = frame;
        self.frame_inv = frame_inv;
        let report = self.check();
        if !report.passes(tol) {
            return Err(OrbitError::InvariantFailure(format!("{report:?}")));
        }
        Ok(())
    }

    fn structural_report(&self) -> InvariantReport {
        let n = self.dim;
        let c = |i: usize, j: usize, k: usize| self.structure[(i * n + j) * n + k];
        let mut antisym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    antisym = antisym.max((c(i, j, k) + c(j, i, k)).abs());
                }
            }
        }
        let mut jacobi: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let bij = self.ad[i].column(j).into_owned();
                for k in (j + 1)..n {
                    let bjk = self.ad[j].column(k).into_owned();
                    let bki = self.ad[k].column(i).into_owned();
                    let r = &self.ad[i] * &bjk + &self.ad[j] * &bki + &self.ad[k] * &bij;
                    jacobi = jacobi.max(r.amax());
                }
            }
        }
        let id = DMatrix::<f64>::identity(n, n);
        let inv = (&self.theta * &self.theta - id).amax();
        let mut auto: f64 = 0.0;
        for i in 0..n {
            let ti = self.theta.column(i).into_owned();
            let ad_ti = self.ad_real(&ti);
            for j in 0..n {
                let lhs = &self.theta * self.ad[i].column(j);
                let rhs = &ad_ti * self.theta.column(j);
                auto = auto.max((lhs - rhs).amax());
            }
        }
        InvariantReport {
            antisymmetry: antisym,
            jacobi,
            theta_involution: inv,
            theta_automorphism: auto,
            killing_k_max: f64::NAN,
            killing_p_min: f64::NAN,
            gram_min_eig: f64::NAN,
            dim_k: 0,
            dim_p: 0,
        }
    }

    /// Full invariant check: structure identities plus Killing-form signs.
    pub fn check(&self) -> InvariantReport {
        let mut r = self.structural_report();
        let restrict = |b: &DMatrix<f64>| -> Vec<f64> {
            if b.ncols() == 0 {
                return vec![];
            }
            linalg::sym_eigen_sorted(&(b.transpose() * &self.raw_killing * b)).0
        };
        let ek = restrict(&self.k_basis);
        let ep = restrict(&self.p_basis);
        r.killing_k_max = ek.last().copied().unwrap_or(f64::NEG_INFINITY);
        r.killing_p_min = ep.first().copied().unwrap_or(f64::INFINITY);
        r.gram_min_eig = linalg::sym_eigen_sorted(&self.gram).0[0];
        r.dim_k = self.k_basis.ncols();
        r.dim_p = self.p_basis.ncols();
        r
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn basis_names(&self) -> &[String] {
        &self.basis_names
    }
    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }
    pub fn killing_scale(&self) -> f64 {
        self.killing_scale
    }
    pub fn raw_killing(&self) -> &DMatrix<f64> {
        &self.raw_killing
    }
    /// Gram matrix of the real inner product `-B(x, theta y)`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
    /// Change of basis to coordinates orthonormal under `inner`.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }
    pub fn frame_inv(&self) -> &DMatrix<f64> {
        &self.frame_inv
    }
    /// Columns: orthonormal basis of k_R.
    pub fn k_basis(&self) -> &DMatrix<f64> {
        &self.k_basis
    }
    /// Columns: orthonormal basis of p_R.
    pub fn p_basis(&self) -> &DMatrix<f64> {
        &self.p_basis
    }
    pub fn token(&self) -> u64 {
        self.token
    }
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure[(i * self.dim + j) * self.dim + k]
    }
    pub fn ad_basis(&self, i: usize) -> &DMatrix<f64> {
        &self.ad[i]
    }

    /// Copy of this algebra with a different Killing-form scale and a fresh
    /// identity token.
    pub fn with_killing_scale(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(OrbitError::DegenerateKilling(scale));
        }
        let mut out = self.clone();
        out.killing_scale = scale;
        out.token = fresh_token();
        out.finish(DEFAULT_TOL)?;
        Ok(out)
    }

    pub fn ensure_dim(&self, x: &GVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(OrbitError::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        Ok(())
    }

    pub fn basis_vector(&self, j: usize) -> GVector {
        GVector::basis(self.dim, j)
    }

    pub fn basis_index(&self, name: &str) -> Option<usize> {
        self.basis_names.iter().position(|b| b == name)
    }

    /// Matrix of ad x for a real coefficient vector.
    pub fn ad_real(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                m += &self.ad[i] * xi;
            }
        }
        m
    }

    /// (ad Re x, ad Im x).
    pub fn ad(&self, x: &GVector) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.ad_real(&x.re), self.ad_real(&x.im))
    }

    pub fn ad_complex(&self, x: &GVector) -> CMatrix {
        let (a, b) = self.ad(x);
        DMatrix::from_fn(self.dim, self.dim, |i, j| Complex::new(a[(i, j)], b[(i, j)]))
    }

    pub fn bracket_real(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.ad_real(x) * y
    }

    pub fn bracket(&self, x: &GVector, y: &GVector) -> GVector {
        let (a, b) = self.ad(x);
        GVector {
            re: &a * &y.re - &b * &y.im,
            im: &a * &y.im + &b * &y.re,
        }
    }

    pub fn try_bracket(&self, x: &GVector, y: &GVector) -> Result<GVector> {
        self.ensure_dim(x)?;
        self.ensure_dim(y)?;
        Ok(self.bracket(x, y))
    }

    /// Apply a real linear map to both parts.
    pub fn apply_real(m: &DMatrix<f64>, x: &GVector) -> GVector {
        GVector { re: m * &x.re, im: m * &x.im }
    }

    pub fn apply_complex(m: &CMatrix, x: &GVector) -> GVector {
        let n = x.dim();
        let mut re = DVector::zeros(n);
        let mut im = DVector::zeros(n);
        for i in 0..n {
            let mut s = Complex::new(0.0, 0.0);
            for j in 0..n {
                s += m[(i, j)] * Complex::new(x.re[j], x.im[j]);
            }
            re[i] = s.re;
            im[i] = s.im;
        }
        GVector { re, im }
    }

    pub fn theta_apply(&self, x: &GVector) -> GVector {
        Self::apply_real(&self.theta, x)
    }

    /// tau(x) = theta(conj x).
    pub fn tau(&self, x: &GVector) -> GVector {
        self.theta_apply(&x.conj())
    }

    fn bilinear(&self, m: &DMatrix<f64>, x: &GVector, y: &GVector) -> Complex<f64> {
        let f = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * m * v)[(0, 0)];
        Complex::new(f(&x.re, &y.re) - f(&x.im, &y.im), f(&x.re, &y.im) + f(&x.im, &y.re))
    }

    /// Scaled Killing form, complex bilinear.
    pub fn killing(&self, x: &GVector, y: &GVector) -> Complex<f64> {
        self.bilinear(&self.raw_killing, x, y) * self.killing_scale
    }

    pub fn killing_real(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.raw_killing * y)[(0, 0)] * self.killing_scale
    }

    pub fn inner_real(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.gram * y)[(0, 0)]
    }

    /// Hermitian inner product, linear in the first slot.
    pub fn inner(&self, x: &GVector, y: &GVector) -> Complex<f64> {
        let g = |u: &DVector<f64>, v: &DVector<f64>| self.inner_real(u, v);
        Complex::new(g(&x.re, &y.re) + g(&x.im, &y.im), g(&x.im, &y.re) - g(&x.re, &y.im))
    }

    pub fn norm_sq(&self, x: &GVector) -> f64 {
        self.inner_real(&x.re, &x.re) + self.inner_real(&x.im, &x.im)
    }

    pub fn norm(&self, x: &GVector) -> f64 {
        self.norm_sq(x).max(0.0).sqrt()
    }

    /// (k-part, p-part).
    pub fn cartan_split(&self, x: &GVector) -> (GVector, GVector) {
        let t = self.theta_apply(x);
        ((x + &t).scale(0.5), (x - &t).scale(0.5))
    }

    pub fn is_in_p(&self, x: &GVector, tol: f64) -> bool {
        (&self.theta_apply(x) + x).amax() <= tol * (1.0 + x.amax())
    }

    pub fn is_in_k(&self, x: &GVector, tol: f64) -> bool {
        (&self.theta_apply(x) - x).amax() <= tol * (1.0 + x.amax())
    }

    /// Coefficients of a real vector in orthonormal coordinates and back.
    pub fn to_on(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.frame_inv * x
    }
    pub fn from_on(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.frame * y
    }

    /// Operator expressed in orthonormal coordinates.
    pub fn op_to_on(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.frame_inv * m * &self.frame
    }

    /// Nilpotency residual of ad x: norm of (ad x / |ad x|)^dim.
    pub fn nilpotency_residual(&self, x: &GVector) -> f64 {
        let a = self.ad_complex(x);
        let nrm = a.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        let a = a.unscale(nrm);
        let mut p = a.clone();
        for _ in 1..self.dim {
            p = &p * &a;
        }
        p.norm()
    }

    /// exp(ad x) for real x; the power series is used when ad x is nilpotent.
    pub fn exp_ad_real(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let a = self.ad_real(x);
        let n = self.dim;
        let mut pow = a.clone();
        let mut nil = false;
        for _ in 1..n {
            pow = &pow * &a;
        }
        if pow.amax() == 0.0 {
            nil = true;
        }
        if nil {
            let mut out = DMatrix::identity(n, n);
            let mut term = DMatrix::identity(n, n);
            for k in 1..=n {
                term = &term * &a / k as f64;
                if term.amax() == 0.0 {
                    break;
                }
                out += &term;
            }
            out
        } else {
            a.exp()
        }
    }

    pub fn exp_ad(&self, x: &GVector) -> CMatrix {
        self.ad_complex(x).exp()
    }

    /// Ad(exp x) y.
    pub fn adjoint_exp(&self, x: &GVector, y: &GVector) -> GVector {
        if x.is_real(0.0) {
            Self::apply_real(&self.exp_ad_real(&x.re), y)
        } else {
            Self::apply_complex(&self.exp_ad(x), y)
        }
    }

    /// Random real vector in the span of the given columns, with coefficients
    /// uniform in [-scale, scale].
    pub fn random_in<R: Rng + ?Sized>(&self, cols: &DMatrix<f64>, scale: f64, rng: &mut R) -> GVector {
        let c = DVector::from_fn(cols.ncols(), |_, _| rng.gen_range(-scale..=scale));
        GVector::real(cols * c)
    }

    pub fn random_real<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> GVector {
        self.random_in(&self.frame.clone(), scale, rng)
    }

    pub fn random_k<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> GVector {
        self.random_in(&self.k_basis.clone(), scale, rng)
    }

    pub fn random_p<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> GVector {
        self.random_in(&self.p_basis.clone(), scale, rng)
    }

    // ---- serialization ----

    pub fn to_json(&self) -> AlgebraJson {
        let n = self.dim;
        let mut brackets = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    let c = self.structure_constant(i, j, k);
                    if c != 0.0 {
                        brackets.push((i, j, k, c));
                    }
                }
            }
        }
        AlgebraJson {
            name: self.name.clone(),
            dim: n,
            basis: self.basis_names.clone(),
            brackets,
            theta: (0..n).map(|i| self.theta.row(i).iter().copied().collect()).collect(),
            killing_scale: self.killing_scale,
        }
    }

    pub fn from_json(j: &AlgebraJson, tol: f64) -> Result<Self> {
        let n = j.dim;
        if j.basis.len() != n {
            return Err(OrbitError::Malformed(format!("basis has {} names, dim is {n}", j.basis.len())));
        }
        if j.theta.len() != n || j.theta.iter().any(|r| r.len() != n) {
            return Err(OrbitError::Malformed("theta must be a dim x dim matrix".into()));
        }
        let mut structure = vec![0.0; n * n * n];
        for &(i, j2, k, c) in &j.brackets {
            if i >= n || j2 >= n || k >= n {
                return Err(OrbitError::Malformed(format!("bracket index out of range ({i},{j2},{k})")));
            }
            if i >= j2 {
                return Err(OrbitError::Malformed(format!("bracket entries need i < j, got ({i},{j2})")));
            }
            structure[(i * n + j2) * n + k] = c;
            structure[(j2 * n + i) * n + k] = -c;
        }
        let theta = DMatrix::from_fn(n, n, |r, c| j.theta[r][c]);
        Self::from_structure(&j.name, j.basis.clone(), structure, theta, j.killing_scale, tol)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("algebra serializes")
    }

    pub fn from_json_str(s: &str, tol: f64) -> Result<Self> {
        let j: AlgebraJson = serde_json::from_str(s).map_err(|e| OrbitError::Malformed(e.to_string()))?;
        Self::from_json(&j, tol)
    }

    pub fn save_json(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }

    pub fn load_json(path: &Path, tol: f64) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| OrbitError::Malformed(e.to_string()))?;
        Self::from_json_str(&s, tol)
    }

    /// Raw structure table (dense), for equality checks.
    pub fn structure_table(&self) -> &[f64] {
        &self.structure
    }

    // ---- built-in families ----

    pub fn builtin(family: Family, p: usize, q: usize) -> Result<Self> {
        match family {
            Family::SlR => {
                if q != 0 || p < 2 {
                    return Err(OrbitError::InvalidParams("sl(n,R) needs n >= 2".into()));
                }
                Self::sl_n_r(p)
            }
            Family::Su => Self::su_pq(p, q),
            Family::So => Self::so_pq(p, q),
        }
    }

    pub fn sl_n_r(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(OrbitError::InvalidParams("sl(n,R) needs n >= 2".into()));
        }
        let (names, mats) = sl_basis(n);
        let cm: Vec<CMatrix> = mats.iter().map(|m| m.map(|x| Complex::new(x, 0.0))).collect();
        let name = format!("sl({n},R)");
        Self::from_matrix_basis(&name, names, cm, |x| -x.transpose())
    }

    pub fn su_pq(p: usize, q: usize) -> Result<Self> {
        let n = p + q;
        if n < 2 {
            return Err(OrbitError::InvalidParams("su(p,q) needs p + q >= 2".into()));
        }
        let one = Complex::new(1.0, 0.0);
        let i = Complex::new(0.0, 1.0);
        let block = |a: usize| a < p;
        let mut names = Vec::new();
        let mut mats = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                let mut x = CMatrix::zeros(n, n);
                let mut y = CMatrix::zeros(n, n);
                if block(a) == block(b) {
                    x[(a, b)] = one;
                    x[(b, a)] = -one;
                    y[(a, b)] = i;
                    y[(b, a)] = i;
                    names.push(format!("A{}{}", a + 1, b + 1));
                    names.push(format!("S{}{}", a + 1, b + 1));
                } else {
                    x[(a, b)] = one;
                    x[(b, a)] = one;
                    y[(a, b)] = i;
                    y[(b, a)] = -i;
                    names.push(format!("P{}{}", a + 1, b + 1));
                    names.push(format!("Q{}{}", a + 1, b + 1));
                }
                mats.push(x);
                mats.push(y);
            }
        }
        for a in 0..(n - 1) {
            let mut d = CMatrix::zeros(n, n);
            d[(a, a)] = i;
            d[(a + 1, a + 1)] = -i;
            names.push(format!("D{}", a + 1));
            mats.push(d);
        }
        Self::from_matrix_basis(&format!("su({p},{q})"), names, mats, |x| -x.adjoint())
    }

    pub fn so_pq(p: usize, q: usize) -> Result<Self> {
        let n = p + q;
        if n < 3 {
            return Err(OrbitError::InvalidParams("so(p,q) is semisimple only for p + q >= 3".into()));
        }
        let one = Complex::new(1.0, 0.0);
        let block = |a: usize| a < p;
        let mut names = Vec::new();
        let mut mats = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                let mut x = CMatrix::zeros(n, n);
                x[(a, b)] = one;
                if block(a) == block(b) {
                    x[(b, a)] = -one;
                    names.push(format!("A{}{}", a + 1, b + 1));
                } else {
                    x[(b, a)] = one;
                    names.push(format!("P{}{}", a + 1, b + 1));
                }
                mats.push(x);
            }
        }
        Self::from_matrix_basis(&format!("so({p},{q})"), names, mats, |x| -x.transpose())
    }

    /// Builds an algebra from a real basis of a matrix Lie algebra; brackets
    /// are matrix commutators and the Cartan involution acts on matrices.
    pub fn from_matrix_basis(
        name: &str,
        names: Vec<String>,
        mats: Vec<CMatrix>,
        theta_fn: impl Fn(&CMatrix) -> CMatrix,
    ) -> Result<Self> {
        let d = mats.len();
        let coords = MatrixCoords::new(&mats);
        let mut structure = vec![0.0; d * d * d];
        for i in 0..d {
            for j in (i + 1)..d {
                let c = &mats[i] * &mats[j] - &mats[j] * &mats[i];
                let v = coords.coords(&c)?;
                for k in 0..d {
                    let x = snap(v[k]);
                    structure[(i * d + j) * d + k] = x;
                    structure[(j * d + i) * d + k] = -x;
                }
            }
        }
        let mut theta = DMatrix::zeros(d, d);
        for j in 0..d {
            let v = coords.coords(&theta_fn(&mats[j]))?;
            for i in 0..d {
                theta[(i, j)] = snap(v[i]);
            }
        }
        Self::from_structure(name, names, structure, theta, 1.0, DEFAULT_TOL)
    }
}

/// Least-squares coordinates of matrices in a real span of complex matrices.
pub struct MatrixCoords {
    basis: Vec<CMatrix>,
    pinv: DMatrix<f64>,
    n: usize,
}

impl MatrixCoords {
    pub fn new(basis: &[CMatrix]) -> Self {
        let n = basis[0].nrows();
        let cols: Vec<DVector<f64>> = basis.iter().map(flatten).collect();
        let a = DMatrix::from_columns(&cols);
        Self { basis: basis.to_vec(), pinv: linalg::pinv(&a, 1e-12), n }
    }

    pub fn coords(&self, m: &CMatrix) -> Result<DVector<f64>> {
        let v = &self.pinv * flatten(m);
        let back = self.matrix(&v);
        let res = (back - m).norm();
        if res > 1e-9 * (1.0 + m.norm()) {
            return Err(OrbitError::InvariantFailure(format!("matrix not in span (residual {res:.3e})")));
        }
        Ok(v)
    }

    pub fn matrix(&self, v: &DVector<f64>) -> CMatrix {
        let mut out = CMatrix::zeros(self.n, self.n);
        for (c, m) in v.iter().zip(&self.basis) {
            out += m * Complex::new(*c, 0.0);
        }
        out
    }

    /// Complex-linear extension: matrix of a GVector.
    pub fn matrix_of(&self, x: &GVector) -> CMatrix {
        let mut out = CMatrix::zeros(self.n, self.n);
        for (j, m) in self.basis.iter().enumerate() {
            out += m * Complex::new(x.re[j], x.im[j]);
        }
        out
    }
}

fn flatten(m: &CMatrix) -> DVector<f64> {
    let n = m.len();
    DVector::from_fn(2 * n, |k, _| if k < n { m[k].re } else { m[k - n].im })
}

/// Basis of sl(n) as real matrices: off-diagonal units E_ab (row-major), then
/// H_a = E_aa - E_{a+1,a+1}. For n = 2 the names are e, f, h.
pub fn sl_basis(n: usize) -> (Vec<String>, Vec<DMatrix<f64>>) {
    let mut names = Vec::new();
    let mut mats = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let mut m = DMatrix::zeros(n, n);
                m[(a, b)] = 1.0;
                names.push(format!("E{}{}", a + 1, b + 1));
                mats.push(m);
            }
        }
    }
    for a in 0..(n - 1) {
        let mut m = DMatrix::zeros(n, n);
        m[(a, a)] = 1.0;
        m[(a + 1, a + 1)] = -1.0;
        names.push(format!("H{}", a + 1));
        mats.push(m);
    }
    if n == 2 {
        names = vec!["e".into(), "f".into(), "h".into()];
    }
    (names, mats)
}

/// Coordinates of a traceless real n x n matrix in the sl(n) basis.
pub fn sl_coords(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * n - 1);
    for a in 0..n {
        for b in 0..n {
            if a != b {
                v.push(m[(a, b)]);
            }
        }
    }
    let mut acc = 0.0;
    for a in 0..(n - 1) {
        acc += m[(a, a)];
        v.push(acc);
    }
    DVector::from_vec(v)
}

/// Matrix of an sl(n) coordinate vector.
pub fn sl_matrix(n: usize, v: &DVector<f64>) -> DMatrix<f64> {
    let (_, mats) = sl_basis(n);
    let mut out = DMatrix::zeros(n, n);
    for (c, m) in v.iter().zip(&mats) {
        out += m * *c;
    }
    out
}

/// GVector of a complex traceless n x n matrix in the sl(n) basis.
pub fn sl_element(m: &CMatrix) -> GVector {
    GVector::new(sl_coords(&m.map(|z| z.re)), sl_coords(&m.map(|z| z.im)))
}
