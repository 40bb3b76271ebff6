//! Convergent expansion of instanton solutions at t = infinity, the normal
//! coordinate map F and its inversion.

use crate::algebra::RealSemisimpleAlgebra;
use crate::element::GVector;
use crate::error::{OrbitError, Result};
use crate::instanton::{self, q_pairing};
use crate::linalg;
use crate::moment::{self, DescentOptions};
use crate::ode::OdeOptions;
use crate::sl2kit::{self, HomKind, HomSpace, IsotypicDecomposition, NormalDirection, SlHom};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreeDatum {
    pub k: usize,
    pub hom: SlHom,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionSeries {
    pub phi0: SlHom,
    pub order: usize,
    pub free: Vec<FreeDatum>,
    /// coeffs[k] multiplies t^{-1-k/2}; coeffs[0] = phi0, coeffs[1] = 0.
    pub coeffs: Vec<SlHom>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LOperator {
    pub kind: HomKind,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    /// (re, im) pairs.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Every eigenvalue lies within 1e-6 of a real rational with denominator 4.
    pub rational: bool,
}

/// Matrix of T -> Q(Phi0, T) on Hom^R or Hom^{R,theta}.
pub fn l_operator(alg: &RealSemisimpleAlgebra, phi0: &SlHom, kind: HomKind) -> LOperator {
    let space = HomSpace::new(alg, kind);
    let matrix = space.matrix_of(|t| q_pairing(alg, phi0, t));
    let ev = matrix.complex_eigenvalues();
    let eigenvalues: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
    let rational = eigenvalues.iter().all(|(re, im)| im.abs() < 1e-6 && ((re * 4.0).round() - re * 4.0).abs() < 4e-6);
    LOperator { kind, matrix, eigenvalues, rational }
}

/// Precomputed data for series built around a fixed morphism.
#[derive(Clone, Debug)]
pub struct ExpansionContext {
    pub alg: RealSemisimpleAlgebra,
    pub phi0: SlHom,
    pub dec: IsotypicDecomposition,
    pub space: HomSpace,
    pub l_matrix: DMatrix<f64>,
    pub normal: Vec<NormalDirection>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelAlignment {
    pub k: usize,
    pub kernel_dim: usize,
    pub normal_dim: usize,
    pub largest_angle: f64,
}

impl ExpansionContext {
    pub fn new(alg: &RealSemisimpleAlgebra, phi0: &SlHom) -> Result<Self> {
        let dec = sl2kit::isotypic(alg, phi0)?;
        let space = HomSpace::new(alg, HomKind::RealTheta);
        let l_matrix = space.matrix_of(|t| q_pairing(alg, phi0, t));
        let normal = sl2kit::normal_space_basis(alg, &dec, phi0)?;
        Ok(Self { alg: alg.clone(), phi0: phi0.clone(), dec, space, l_matrix, normal })
    }

    fn a_matrix(&self, k: usize) -> DMatrix<f64> {
        let d = self.space.dim();
        &self.l_matrix * 2.0 - DMatrix::identity(d, d) * (1.0 + k as f64 / 2.0)
    }

    /// Compares the kernel of 2L - (1 + k/2) with Hom^{R,theta}(s, g(k))(k-2).
    pub fn kernel_alignment(&self, k: usize) -> KernelAlignment {
        let ker = linalg::null_space(&self.a_matrix(k), 1e-9);
        let cols: Vec<DVector<f64>> =
            self.normal.iter().filter(|d| d.r == k).map(|d| self.space.to_coords(&d.hom)).collect();
        let nd = if cols.is_empty() { DMatrix::zeros(self.space.dim(), 0) } else { DMatrix::from_columns(&cols) };
        let nd = linalg::column_space(&nd, 1e-9);
        let largest_angle = if ker.ncols() == 0 && nd.ncols() == 0 {
            0.0
        } else if ker.ncols() != nd.ncols() {
            std::f64::consts::FRAC_PI_2
        } else {
            let s = (ker.transpose() * &nd).singular_values();
            s.min().clamp(-1.0, 1.0).acos()
        };
        KernelAlignment { k, kernel_dim: ker.ncols(), normal_dim: nd.ncols(), largest_angle }
    }

    /// Normal directions with r = k.
    pub fn normal_for(&self, k: usize) -> Vec<&SlHom> {
        self.normal.iter().filter(|d| d.r == k).map(|d| &d.hom).collect()
    }

    fn validate(&self, d: &FreeDatum) -> Result<()> {
        let bad = |reason: String| Err(OrbitError::BadFreeDatum { k: d.k, reason });
        if d.k < 2 {
            return bad("k must be at least 2".into());
        }
        self.alg.ensure_dim(&d.hom.e)?;
        let scale = 1.0 + d.hom.amax();
        if !d.hom.values().iter().all(|v| v.is_real(1e-12 * scale)) {
            return bad("not real".into());
        }
        if d.hom.theta_residual(&self.alg) > 1e-9 * scale {
            return bad("not theta-compatible".into());
        }
        let p = self.dec.projector(d.k);
        let off = d.hom.map(|v| &RealSemisimpleAlgebra::apply_real(&p, v) - v).amax();
        if off > 1e-9 * scale {
            return bad(format!("values leave g({}) by {off:.3e}", d.k));
        }
        let mem = sl2kit::membership_residual(&self.alg, &self.dec, &d.hom, d.k);
        if mem > 1e-8 * scale {
            return bad(format!("membership residual {mem:.3e}"));
        }
        Ok(())
    }

    /// Runs the recursion (2L - (1 + k/2)) X = -sum Q(Phi_l, Phi_{k-l}) with X in
    /// the range of the operator, then adds the free datum of order k.
    pub fn build(&self, free: &[FreeDatum], order: usize) -> Result<ExpansionSeries> {
        if order < 2 {
            return Err(OrbitError::InvalidParams("order must be at least 2".into()));
        }
        for d in free {
            self.validate(d)?;
        }
        let n = self.alg.dim();
        let mut coeffs = vec![self.phi0.clone(), zero_hom(n)];
        for k in 2..=order {
            let mut rhs = DVector::zeros(self.space.dim());
            for l in 2..=(k.saturating_sub(2)) {
                let m = k - l;
                if m < 2 {
                    continue;
                }
                if coeffs[l].amax() == 0.0 || coeffs[m].amax() == 0.0 {
                    continue;
                }
                rhs -= self.space.to_coords(&q_pairing(&self.alg, &coeffs[l], &coeffs[m]));
            }
            let mut x = DVector::zeros(self.space.dim());
            if rhs.amax() > 0.0 {
                let a = self.a_matrix(k);
                let a2 = &a * &a;
                let y = linalg::lstsq(&a2, &rhs, 1e-11);
                x = &a * y;
                let res = (&a * &x - &rhs).amax();
                if res > 1e-9 * (1.0 + rhs.amax()) {
                    return Err(OrbitError::SingularSolve { k, residual: res });
                }
            }
            let mut phi = self.space.from_coords(&x);
            for d in free.iter().filter(|d| d.k == k) {
                phi = phi.add(&d.hom);
            }
            phi.flags.real = true;
            phi.flags.theta_compatible = true;
            coeffs.push(phi);
        }
        let mut free = free.to_vec();
        free.sort_by_key(|d| d.k);
        Ok(ExpansionSeries { phi0: self.phi0.clone(), order, free, coeffs })
    }

    /// Free data from coefficients along the normal basis.
    pub fn free_from_coords(&self, c: &[f64]) -> Vec<FreeDatum> {
        let mut out: Vec<FreeDatum> = Vec::new();
        for (d, &x) in self.normal.iter().zip(c) {
            match out.iter_mut().find(|f| f.k == d.r) {
                Some(f) => f.hom.axpy(x, &d.hom),
                None => out.push(FreeDatum { k: d.r, hom: d.hom.scale(x) }),
            }
        }
        out
    }
}

fn zero_hom(n: usize) -> SlHom {
    let mut z = SlHom::zeros(n);
    z.flags.real = true;
    z.flags.theta_compatible = true;
    z
}

pub fn build_series(
    alg: &RealSemisimpleAlgebra,
    phi0: &SlHom,
    free: &[FreeDatum],
    order: usize,
) -> Result<ExpansionSeries> {
    ExpansionContext::new(alg, phi0)?.build(free, order)
}

impl ExpansionSeries {
    pub fn evaluate(&self, t: f64) -> SlHom {
        let mut out = zero_hom(self.phi0.dim());
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.amax() != 0.0 {
                out.axpy(t.powf(-1.0 - k as f64 / 2.0), c);
            }
        }
        out
    }

    pub fn derivative(&self, t: f64) -> SlHom {
        let mut out = zero_hom(self.phi0.dim());
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.amax() != 0.0 {
                let p = 1.0 + k as f64 / 2.0;
                out.axpy(-p * t.powf(-1.0 - p), c);
            }
        }
        out
    }

    /// Coefficients R_j of t^{-2-j/2}, j = K+1..2K, in dPhi_K/dt + Q(Phi_K, Phi_K);
    /// lower orders vanish by construction.
    pub fn residual_coefficients(&self, alg: &RealSemisimpleAlgebra) -> Vec<(usize, SlHom)> {
        let k_max = self.order;
        let n = self.phi0.dim();
        let mut out = Vec::new();
        for j in (k_max + 1)..=(2 * k_max) {
            let mut acc = zero_hom(n);
            for l in 0..=k_max {
                if l == 1 || j < l || j - l > k_max || j - l == 1 {
                    continue;
                }
                let (a, b) = (&self.coeffs[l], &self.coeffs[j - l]);
                if a.amax() == 0.0 || b.amax() == 0.0 {
                    continue;
                }
                acc = acc.add(&q_pairing(alg, a, b));
            }
            out.push((j, acc));
        }
        out
    }

    /// Norm of the ODE residual of the truncated series, summed from its
    /// coefficients to avoid cancellation at large t.
    pub fn formal_residual(&self, alg: &RealSemisimpleAlgebra, t: f64) -> f64 {
        let mut acc = zero_hom(self.phi0.dim());
        for (j, r) in self.residual_coefficients(alg) {
            acc.axpy(t.powf(-2.0 - j as f64 / 2.0), &r);
        }
        acc.norm(alg)
    }

    /// Residual evaluated directly from the truncated sum.
    pub fn direct_residual(&self, alg: &RealSemisimpleAlgebra, t: f64) -> f64 {
        let phi = self.evaluate(t);
        self.derivative(t).add(&q_pairing(alg, &phi, &phi)).norm(alg)
    }

    /// Root-test estimate max_k (|Phi_k| / |Phi0|)^{1/k}; the series converges
    /// at t when this is below sqrt(t).
    pub fn root_estimate(&self, alg: &RealSemisimpleAlgebra) -> f64 {
        let n0 = self.phi0.norm(alg);
        let mut rho: f64 = 0.0;
        for (k, c) in self.coeffs.iter().enumerate().skip(2) {
            let nk = c.norm(alg);
            if nk > 0.0 {
                rho = rho.max((nk / n0).powf(1.0 / k as f64));
            }
        }
        rho
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeReport {
    pub order: usize,
    pub slope: f64,
    pub predicted: f64,
    pub leading_order: Option<usize>,
    pub samples: Vec<(f64, f64)>,
}

/// Log-log slope of the formal residual over [t_lo, t_hi].
pub fn residual_slope(alg: &RealSemisimpleAlgebra, series: &ExpansionSeries, t_lo: f64, t_hi: f64, n: usize) -> SlopeReport {
    let ts = linalg::logspace(t_lo, t_hi, n);
    let samples: Vec<(f64, f64)> = ts.iter().map(|&t| (t, series.formal_residual(alg, t))).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = samples.iter().filter(|(_, r)| *r > 0.0).map(|(t, r)| (t.ln(), r.ln())).unzip();
    let slope = if x.len() >= 2 { linalg::fit_slope(&x, &y) } else { f64::NAN };
    let leading_order = series
        .residual_coefficients(alg)
        .into_iter()
        .find(|(_, r)| r.norm(alg) > 1e-300)
        .map(|(j, _)| j);
    SlopeReport {
        order: series.order,
        slope,
        predicted: -2.0 - (series.order as f64 + 1.0) / 2.0,
        leading_order,
        samples,
    }
}

/// D_a: Phi_k^k -> a^{-k/2} Phi_k^k.
pub fn d_a(free: &[FreeDatum], a: f64) -> Result<Vec<FreeDatum>> {
    if a == 0.0 || !a.is_finite() {
        return Err(OrbitError::InvalidParams("D_a needs a != 0".into()));
    }
    free.iter()
        .map(|d| {
            let c = if a > 0.0 {
                a.powf(-(d.k as f64) / 2.0)
            } else if d.k % 2 == 0 {
                (1.0 / a).powi((d.k / 2) as i32)
            } else {
                return Err(OrbitError::InvalidParams(format!("a^(-k/2) is not real for a = {a}, k = {}", d.k)));
            };
            Ok(FreeDatum { k: d.k, hom: d.hom.scale(c) })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FMapOptions {
    pub order_min: usize,
    pub order_max: usize,
    pub order_step: usize,
    /// Truncation target for the last two coefficients relative to |Phi0|.
    pub tail_tol: f64,
    /// Root estimates above this bound are rejected as outside the radius.
    pub radius_margin: f64,
}

impl Default for FMapOptions {
    fn default() -> Self {
        Self { order_min: 12, order_max: 90, order_step: 6, tail_tol: 1e-15, radius_margin: 0.85 }
    }
}

/// Builds the series at increasing order until the tail at t = 1 is negligible.
pub fn converged_series(ctx: &ExpansionContext, free: &[FreeDatum], opts: &FMapOptions) -> Result<ExpansionSeries> {
    let mut order = opts.order_min.max(2);
    loop {
        let s = ctx.build(free, order)?;
        let rho = s.root_estimate(&ctx.alg);
        if rho > opts.radius_margin {
            return Err(OrbitError::OutOfRadius(rho));
        }
        let n0 = s.phi0.norm(&ctx.alg);
        let tail = s.coeffs[order].norm(&ctx.alg) + s.coeffs[order - 1].norm(&ctx.alg);
        if tail <= opts.tail_tol * n0 {
            return Ok(s);
        }
        if order >= opts.order_max {
            return Err(OrbitError::OutOfRadius(rho));
        }
        order = (order + opts.order_step).min(opts.order_max);
    }
}

/// F(free) = Phi(1)(e).
pub fn f_map(ctx: &ExpansionContext, free: &[FreeDatum], opts: &FMapOptions) -> Result<GVector> {
    Ok(converged_series(ctx, free, opts)?.evaluate(1.0).e)
}

/// F(D_{1/a} free'), computed by evaluating the series of free' at t = 1 and
/// continuing the solution with the ODE down to t = 1/a.
pub fn f_map_continued(
    ctx: &ExpansionContext,
    free_prime: &[FreeDatum],
    a: f64,
    opts: &FMapOptions,
    ode: &OdeOptions,
) -> Result<GVector> {
    if a < 1.0 {
        return Err(OrbitError::InvalidParams(format!("continuation needs a >= 1, got {a}")));
    }
    let s1 = converged_series(ctx, free_prime, opts)?.evaluate(1.0);
    let v = instanton::flow_to(&ctx.alg, &s1, 1.0, 1.0 / a, ode)?;
    Ok(v.e.scale(1.0 / a))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InvertOptions {
    pub a_values: [f64; 5],
    pub max_iter: usize,
    pub tol: f64,
    pub fd_step: f64,
    pub fmap: FMapOptions,
}

impl Default for InvertOptions {
    fn default() -> Self {
        Self { a_values: [1.0, 2.0, 4.0, 8.0, 16.0], max_iter: 60, tol: 1e-12, fd_step: 1e-6, fmap: FMapOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Inversion {
    pub phi0: SlHom,
    pub free: Vec<FreeDatum>,
    pub a: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Inverts F near the point: descend to the core, then Gauss-Newton over a
/// rotation of the core morphism and the normal coordinates.
pub fn invert_f(alg: &RealSemisimpleAlgebra, point: &GVector, opts: &InvertOptions) -> Result<Inversion> {
    let d = moment::descend_to_core(alg, point, &DescentOptions { record: false, ..DescentOptions::default() })?;
    let core = moment::polish_core(alg, &d.core, 1e-13, 30)?;
    let t = sl2kit::strictly_normal_from_critical(alg, &core, 1e-9)?;
    let phi0 = t.to_hom(alg);
    let ctx = ExpansionContext::new(alg, &phi0)?;
    let mut last = OrbitError::NewtonDiverged(f64::INFINITY);
    for &a in &opts.a_values {
        match invert_with(&ctx, point, a, opts) {
            Ok(inv) => return Ok(inv),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Newton inversion with a fixed continuation parameter a (a = 1 is direct).
pub fn invert_with(ctx: &ExpansionContext, point: &GVector, a: f64, opts: &InvertOptions) -> Result<Inversion> {
    let alg = &ctx.alg;
    let kb = alg.k_basis().clone();
    let dk = kb.ncols();
    let dd = ctx.normal.len();
    let ode = instanton::default_ode_options();
    let ode = OdeOptions { rtol: 1e-12, atol: 1e-14, ..ode };
    let eval = |u: &DVector<f64>| -> Result<DVector<f64>> {
        let c: Vec<f64> = u.rows(dk, dd).iter().copied().collect();
        let free = ctx.free_from_coords(&c);
        let x = if a == 1.0 {
            f_map(ctx, &free, &opts.fmap)?
        } else {
            f_map_continued(ctx, &free, a, &opts.fmap, &ode)?
        };
        let kappa = &kb * u.rows(0, dk);
        let rot = alg.exp_ad_real(&kappa);
        Ok(&rot * &x.re - &point.re)
    };
    let mut u = DVector::zeros(dk + dd);
    let mut r = eval(&u)?;
    let target = opts.tol * (1.0 + point.re.amax());
    let mut it = 0;
    while r.amax() > target {
        if it >= opts.max_iter {
            return Err(OrbitError::NewtonDiverged(r.amax()));
        }
        it += 1;
        let mut jac = DMatrix::zeros(r.len(), dk + dd);
        for j in 0..(dk + dd) {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += opts.fd_step;
            um[j] -= opts.fd_step;
            let col = (eval(&up)? - eval(&um)?) / (2.0 * opts.fd_step);
            jac.set_column(j, &col);
        }
        let step = -linalg::lstsq(&jac, &r, 1e-10);
        let mut lam = 1.0;
        let mut accepted = false;
        while lam > 1e-4 {
            let cand = &u + &step * lam;
            if let Ok(rc) = eval(&cand) {
                if rc.amax() < r.amax() {
                    u = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(OrbitError::NewtonDiverged(r.amax()));
        }
    }
    let kappa = &kb * u.rows(0, dk);
    let rot = alg.exp_ad_real(&kappa);
    let rotate = |h: &SlHom| {
        let mut out = h.map(|v| RealSemisimpleAlgebra::apply_real(&rot, v));
        out.refresh_flags(alg, 1e-9);
        out
    };
    let c: Vec<f64> = u.rows(dk, dd).iter().copied().collect();
    let free_prime = ctx.free_from_coords(&c);
    let free = d_a(&free_prime, 1.0 / a)?;
    Ok(Inversion {
        phi0: rotate(&ctx.phi0),
        free: free.iter().map(|d| FreeDatum { k: d.k, hom: rotate(&d.hom) }).collect(),
        a,
        iterations: it,
        residual: r.amax(),
    })
}
