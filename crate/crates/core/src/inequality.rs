//! Numerical verification of the lower bound |m1(t)|^2 + |m3(t)|^2 >= |m(0)|^2
//! along the deformation flow, through its spectral and scalar reductions.

use crate::algebra::RealSemisimpleAlgebra;
use crate::element::GVector;
use crate::error::{OrbitError, Result};
use crate::linalg;
use crate::moment;
use crate::sekiguchi;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Absolute tolerance for the inequality on normalized data.
pub const INEQ_TOL: f64 = 1e-10;
/// Tolerance for equality detection at t = 0.
pub const EQ_TOL: f64 = 1e-12;

/// Decomposition of zeta = xi + i eta (xi, eta in p_R) into eigencomponents of ad xi.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub lambdas: Vec<f64>,
    /// a_lambda = |zeta_lambda|^2.
    pub a: Vec<f64>,
    pub components: Vec<GVector>,
    pub xi: GVector,
    pub eta: GVector,
    pub invariants: SpectralInvariants,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectralInvariants {
    /// |sum a - |zeta|^2|.
    pub mass: f64,
    /// max |a_lambda - a_{-lambda}|.
    pub symmetry: f64,
    /// |(xi, eta)|.
    pub orthogonality: f64,
    /// ||xi|^2 - |eta|^2|.
    pub balance: f64,
    /// max |theta eta_lambda + eta_{-lambda}|.
    pub theta: f64,
}

impl SpectralInvariants {
    pub fn max(&self) -> f64 {
        self.mass.max(self.symmetry).max(self.orthogonality).max(self.balance).max(self.theta)
    }
}

impl SpectralData {
    pub fn total(&self) -> f64 {
        self.a.iter().sum()
    }

    /// Pairs (lambda, a_lambda).
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.lambdas.iter().copied().zip(self.a.iter().copied()).collect()
    }

    /// Data rescaled to sum a = 2 (zeta -> c zeta, lambda -> c lambda), with c.
    pub fn normalized(&self) -> (Vec<(f64, f64)>, f64) {
        let c = (2.0 / self.total()).sqrt();
        (self.pairs().into_iter().map(|(l, a)| (c * l, c * c * a)).collect(), c)
    }
}

fn cluster(vals: &[f64], tol: f64) -> Vec<(f64, Vec<usize>)> {
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        match out.last_mut() {
            Some((c, idx)) if (v - *c).abs() <= tol => {
                idx.push(i);
                *c = idx.iter().map(|&j| vals[j]).sum::<f64>() / idx.len() as f64;
            }
            _ => out.push((v, vec![i])),
        }
    }
    out
}

/// Eigendecomposition of the self-adjoint operator ad xi and the induced
/// splitting of zeta. Components with a_lambda = 0 are dropped.
pub fn spectral_decompose(alg: &RealSemisimpleAlgebra, zeta: &GVector) -> Result<SpectralData> {
    alg.ensure_dim(zeta)?;
    let nz = alg.norm_sq(zeta);
    if nz == 0.0 {
        return Err(OrbitError::ZeroElement);
    }
    if !alg.is_in_p(zeta, 1e-9) {
        return Err(OrbitError::NotInP);
    }
    let nil = alg.nilpotency_residual(zeta);
    if nil > 1e-6 {
        return Err(OrbitError::NotNilpotent(nil));
    }
    let xi = zeta.real_part();
    let eta = zeta.imag_part();
    let ad = alg.op_to_on(&alg.ad_real(&xi.re));
    let (vals, vecs) = linalg::sym_eigen_sorted(&ad);
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let groups = cluster(&vals, 1e-7 * lmax.max(1.0));
    let zr = alg.to_on(&zeta.re);
    let zi = alg.to_on(&zeta.im);
    let mut lambdas = Vec::new();
    let mut a = Vec::new();
    let mut components = Vec::new();
    for (lam, idx) in groups {
        let v = DMatrix::from_fn(vecs.nrows(), idx.len(), |r, c| vecs[(r, idx[c])]);
        let p = &v * v.transpose();
        let comp = GVector::new(alg.from_on(&(&p * &zr)), alg.from_on(&(&p * &zi)));
        let w = alg.norm_sq(&comp);
        if w <= 1e-24 * nz {
            continue;
        }
        lambdas.push(if lam.abs() <= 1e-7 * lmax.max(1.0) { 0.0 } else { lam });
        a.push(w);
        components.push(comp);
    }
    let mut symmetry: f64 = 0.0;
    let mut theta: f64 = 0.0;
    for (i, &l) in lambdas.iter().enumerate() {
        let j = lambdas.iter().position(|&m| (m + l).abs() <= 1e-7 * lmax.max(1.0));
        match j {
            Some(j) => {
                symmetry = symmetry.max((a[i] - a[j]).abs());
                let ei = components[i].imag_part();
                let ej = components[j].imag_part();
                theta = theta.max((&alg.theta_apply(&ei) + &ej).amax());
            }
            None => symmetry = symmetry.max(a[i]),
        }
    }
    let invariants = SpectralInvariants {
        mass: (a.iter().sum::<f64>() - nz).abs(),
        symmetry,
        orthogonality: alg.inner(&xi, &eta).re.abs(),
        balance: (alg.norm_sq(&xi) - alg.norm_sq(&eta)).abs(),
        theta,
    };
    if invariants.max() > 1e-6 * nz.max(1.0) {
        return Err(OrbitError::InvariantFailure(format!("spectral invariants violated ({:.3e})", invariants.max())));
    }
    Ok(SpectralData { lambdas, a, components, xi, eta, invariants })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MComponents {
    pub m1_sq: f64,
    pub m3_sq: f64,
    pub m0_sq: f64,
}

/// Closed forms for |m1(t)|^2, |m3(t)|^2 and |m(0)|^2, evaluated with all
/// exponentials scaled by the largest one.
pub fn m_components_pairs(pairs: &[(f64, f64)], t: f64) -> MComponents {
    let s: f64 = pairs.iter().map(|p| p.1).sum();
    let m = pairs.iter().map(|(l, _)| 2.0 * l * t).fold(f64::NEG_INFINITY, f64::max);
    let mut e_hat = 0.0;
    let mut n1 = 0.0;
    let mut n3 = 0.0;
    let mut n0 = 0.0;
    for &(l, a) in pairs {
        let w = (2.0 * l * t - m).exp();
        e_hat += w * a;
        n1 += l * w * a;
        n3 += l * l * a * (w + 2.0 * (-m).exp() + (-2.0 * l * t - m).exp());
        n0 += l * l * a;
    }
    MComponents {
        m1_sq: 2.0 * n1 * n1 / (s * e_hat * e_hat),
        m3_sq: (-m).exp() * n3 / (e_hat * e_hat),
        m0_sq: 4.0 * n0 / (s * s),
    }
}

pub fn m_components_spectral(data: &SpectralData, t: f64) -> MComponents {
    m_components_pairs(&data.pairs(), t)
}

/// The same quantities from the moment map of f_t(zeta).
pub fn m_components_direct(alg: &RealSemisimpleAlgebra, zeta: &GVector, t: f64) -> Result<MComponents> {
    let zt = sekiguchi::deformation_flow(alg, zeta, t)?;
    let split = moment::split_m_123(alg, &zt, &zeta.real_part())?;
    Ok(MComponents {
        m1_sq: alg.norm_sq(&split.m1),
        m3_sq: alg.norm_sq(&split.m3),
        m0_sq: moment::moment_norm_sq(alg, zeta)?,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SideCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl SideCheck {
    pub fn diff(&self) -> f64 {
        self.lhs - self.rhs
    }
}

fn bound_from(m: MComponents) -> SideCheck {
    let lhs = m.m1_sq + m.m3_sq;
    SideCheck { lhs, rhs: m.m0_sq, holds: lhs >= m.m0_sq - INEQ_TOL }
}

/// |m1(t)|^2 + |m3(t)|^2 against |m(0)|^2 from the spectral closed forms.
pub fn flow_bound_check(alg: &RealSemisimpleAlgebra, zeta: &GVector, t: f64) -> Result<SideCheck> {
    Ok(bound_from(m_components_spectral(&spectral_decompose(alg, zeta)?, t)))
}

/// The same comparison using the moment map of the flowed point.
pub fn flow_bound_direct(alg: &RealSemisimpleAlgebra, zeta: &GVector, t: f64) -> Result<SideCheck> {
    Ok(bound_from(m_components_direct(alg, zeta, t)?))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HForm {
    /// h'(t)^2 + 2h''(t) + 2h''(0), multiplied by e^{-log_scale}.
    pub lhs: f64,
    /// h''(0) h(t)^2, multiplied by e^{-log_scale}.
    pub rhs: f64,
    pub log_scale: f64,
    /// h(t) e^{-log_scale / 2}.
    pub h_scaled: f64,
    pub holds: bool,
}

impl HForm {
    /// Sides divided by h(t)^2, which for normalized data equal the sides of
    /// the moment-map inequality at time t/2.
    pub fn per_h_squared(&self) -> (f64, f64) {
        let d = self.h_scaled * self.h_scaled;
        (self.lhs / d, self.rhs / d)
    }
}

fn validate_pairs(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.iter().any(|&(l, a)| !(a > 0.0) || !l.is_finite()) {
        return Err(OrbitError::Constraint("a_lambda must be positive and lambda finite".into()));
    }
    let lmax = pairs.iter().fold(1.0f64, |m, p| m.max(p.0.abs()));
    for &(l, a) in pairs {
        let partner: f64 = pairs.iter().filter(|p| (p.0 + l).abs() <= 1e-9 * lmax).map(|p| p.1).sum();
        if (partner - a).abs() > 1e-9 {
            return Err(OrbitError::Constraint(format!("a_lambda != a_-lambda at lambda = {l}")));
        }
    }
    let a0: f64 = pairs.iter().filter(|p| p.0.abs() <= 1e-9 * lmax).map(|p| p.1).sum();
    if a0 < 1.0 - 1e-9 {
        return Err(OrbitError::Constraint(format!("a_0 = {a0} < 1")));
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if (total - 2.0).abs() > 1e-9 {
        return Err(OrbitError::Constraint(format!("sum of a_lambda = {total}, expected 2")));
    }
    if pairs.iter().all(|p| p.0.abs() <= 1e-9 * lmax) {
        return Err(OrbitError::Constraint("at least one pair of non-zero lambda is required".into()));
    }
    Ok(())
}

/// h(t) = sum a_lambda e^{lambda t}; checks h'(t)^2 + 2h''(t) + 2h''(0) >= h''(0) h(t)^2.
pub fn inequality_h_form(pairs: &[(f64, f64)], t: f64) -> Result<HForm> {
    validate_pairs(pairs)?;
    let m = pairs.iter().map(|(l, _)| l * t).fold(f64::NEG_INFINITY, f64::max);
    let (mut s0, mut s1, mut s2, mut h2) = (0.0, 0.0, 0.0, 0.0);
    for &(l, a) in pairs {
        let w = (l * t - m).exp();
        s0 += a * w;
        s1 += a * l * w;
        s2 += a * l * l * w;
        h2 += a * l * l;
    }
    let lhs = s1 * s1 + 2.0 * (-m).exp() * s2 + 2.0 * (-2.0 * m).exp() * h2;
    let rhs = h2 * s0 * s0;
    let holds = (lhs - rhs) / (s0 * s0) >= -INEQ_TOL;
    Ok(HForm { lhs, rhs, log_scale: 2.0 * m, h_scaled: s0, holds })
}

/// h^(j)(0) = sum a lambda^j. Terms of lambda and -lambda are added first, so
/// odd derivatives of symmetric data vanish exactly.
pub fn h_derivatives(pairs: &[(f64, f64)], up_to: usize) -> Vec<f64> {
    let mut order: Vec<(f64, f64)> = pairs.to_vec();
    order.sort_by(|x, y| x.0.abs().total_cmp(&y.0.abs()).then(x.0.total_cmp(&y.0)));
    (0..=up_to)
        .map(|j| {
            let mut sum = 0.0;
            let mut i = 0;
            while i < order.len() {
                let (l, a) = order[i];
                let mut term = a * l.powi(j as i32);
                if i + 1 < order.len() && order[i + 1].0 == -l && l != 0.0 {
                    let (m, b) = order[i + 1];
                    term += b * m.powi(j as i32);
                    i += 1;
                }
                sum += term;
                i += 1;
            }
            sum
        })
        .collect()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// k-th derivative at 0 of both sides of the h-form inequality.
pub fn derivative_check(pairs: &[(f64, f64)], k: usize) -> Result<SideCheck> {
    validate_pairs(pairs)?;
    let d = h_derivatives(pairs, k + 2);
    let mut lhs = 2.0 * d[k + 2];
    let mut rhs = 0.0;
    for i in 0..=k {
        lhs += binom(k, i) * d[1 + i] * d[1 + k - i];
        rhs += binom(k, i) * d[2] * d[i] * d[k - i];
    }
    if k == 0 {
        lhs += 2.0 * d[2];
    }
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    Ok(SideCheck { lhs, rhs, holds: lhs >= rhs - 1e-12 * scale })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChebyshevCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub equality: bool,
}

/// sum lambda^{2l+2} a >= (sum lambda^2 a)(sum lambda^{2l} a) over lambda != 0,
/// given 0 < sum a <= 1.
pub fn chebyshev_check(pairs: &[(f64, f64)], l: usize) -> Result<ChebyshevCheck> {
    if pairs.iter().any(|p| p.0 == 0.0 || !(p.1 > 0.0)) {
        return Err(OrbitError::Constraint("need lambda != 0 and a_lambda > 0".into()));
    }
    let mass: f64 = pairs.iter().map(|p| p.1).sum();
    if !(mass > 0.0 && mass <= 1.0 + 1e-12) {
        return Err(OrbitError::Constraint(format!("mass {mass} outside (0, 1]")));
    }
    let pw = |j: i32| pairs.iter().map(|&(x, a)| a * x.powi(j)).sum::<f64>();
    let lhs = pw(2 * l as i32 + 2);
    let rhs = pw(2) * pw(2 * l as i32);
    let scale = lhs.abs().max(1.0);
    Ok(ChebyshevCheck { lhs, rhs, holds: lhs >= rhs - 1e-12 * scale, equality: (lhs - rhs).abs() <= 1e-12 * scale })
}

/// Random point Ad(exp k1) Ad(exp i k2) seed with k1, k2 in k_R of size <= kappa.
pub fn sample_orbit_point<R: Rng + ?Sized>(
    alg: &RealSemisimpleAlgebra,
    seed: &GVector,
    kappa: f64,
    rng: &mut R,
) -> Result<GVector> {
    for _ in 0..100 {
        let k1 = alg.random_k(kappa, rng);
        let k2 = alg.random_k(kappa, rng);
        let z = alg.adjoint_exp(&k1, &alg.adjoint_exp(&k2.mul_i(), seed));
        if z.amax().is_finite() && alg.is_in_p(&z, 1e-9) && alg.nilpotency_residual(&z) < 1e-8 {
            return Ok(z);
        }
    }
    Err(OrbitError::InvariantFailure("could not sample a valid orbit point".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSample {
    pub index: usize,
    pub t: f64,
    pub zeta: GVector,
    pub bound: SideCheck,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub samples: usize,
    pub failures: usize,
    pub min_diff: f64,
    pub argmin: Option<SweepSample>,
    /// Largest |lhs - rhs| at t = 0.
    pub t0_gap: f64,
    /// Samples where the h-form disagrees with the spectral form.
    pub disagreements: usize,
    /// Largest relative mismatch of the sides between the two forms.
    pub side_mismatch: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub samples: usize,
    pub t_max: f64,
    pub kappa: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { samples: 1000, t_max: 50.0, kappa: 1.0 }
    }
}

/// One sample: spectral and h-form checks at t and the t = 0 equality gap.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampleOutcome {
    pub bound: SideCheck,
    pub t0_gap: f64,
    pub agree: bool,
    pub mismatch: f64,
}

pub fn evaluate_sample(alg: &RealSemisimpleAlgebra, zeta: &GVector, t: f64) -> Result<SampleOutcome> {
    let data = spectral_decompose(alg, zeta)?;
    let bound = bound_from(m_components_spectral(&data, t));
    let at0 = bound_from(m_components_spectral(&data, 0.0));
    let (pairs, c) = data.normalized();
    let h = inequality_h_form(&symmetrize(&pairs), 2.0 * t / c)?;
    let (hl, hr) = h.per_h_squared();
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-300);
    let mismatch = rel(bound.lhs, hl).max(rel(bound.rhs, hr));
    Ok(SampleOutcome { agree: bound.holds == h.holds, bound, t0_gap: at0.diff().abs(), mismatch })
}

/// Averages a_lambda with a_{-lambda} (exact symmetry up to rounding).
pub fn symmetrize(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let lmax = pairs.iter().fold(1.0f64, |m, p| m.max(p.0.abs()));
    pairs
        .iter()
        .map(|&(l, a)| {
            let b = pairs.iter().find(|p| (p.0 + l).abs() <= 1e-7 * lmax).map(|p| p.1).unwrap_or(a);
            (l, 0.5 * (a + b))
        })
        .collect()
}

/// Draws sample i of a sweep: a rescaled orbit point and a time in [0, t_max].
pub fn draw_sample<R: Rng + ?Sized>(
    alg: &RealSemisimpleAlgebra,
    seeds: &[GVector],
    i: usize,
    opts: &SweepOptions,
    rng: &mut R,
) -> Result<(GVector, f64)> {
    if seeds.is_empty() {
        return Err(OrbitError::InvalidParams("no seeds".into()));
    }
    let seed = &seeds[i % seeds.len()];
    let z = sample_orbit_point(alg, seed, opts.kappa, rng)?.scale(rng.gen_range(0.25..4.0));
    let t = rng.gen_range(0.0..=opts.t_max);
    Ok((z, t))
}

impl SweepReport {
    pub fn empty() -> Self {
        Self {
            samples: 0,
            failures: 0,
            min_diff: f64::INFINITY,
            argmin: None,
            t0_gap: 0.0,
            disagreements: 0,
            side_mismatch: 0.0,
            wall_time_s: 0.0,
        }
    }

    /// Folds one evaluated sample into the report.
    pub fn record(&mut self, index: usize, t: f64, zeta: &GVector, o: &SampleOutcome) {
        self.samples += 1;
        if !o.bound.holds {
            self.failures += 1;
        }
        if !o.agree {
            self.disagreements += 1;
        }
        self.side_mismatch = self.side_mismatch.max(o.mismatch);
        self.t0_gap = self.t0_gap.max(o.t0_gap);
        if o.bound.diff() < self.min_diff {
            self.min_diff = o.bound.diff();
            self.argmin = Some(SweepSample { index, t, zeta: zeta.clone(), bound: o.bound });
        }
    }
}

pub fn flow_bound_sweep<R: Rng + ?Sized>(
    alg: &RealSemisimpleAlgebra,
    seeds: &[GVector],
    opts: &SweepOptions,
    rng: &mut R,
) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(OrbitError::InvalidParams("no seeds".into()));
    }
    let start = std::time::Instant::now();
    let mut rep = SweepReport::empty();
    for i in 0..opts.samples {
        let (z, t) = draw_sample(alg, seeds, i, opts, rng)?;
        let o = evaluate_sample(alg, &z, t)?;
        rep.record(i, t, &z, &o);
    }
    rep.wall_time_s = start.elapsed().as_secs_f64();
    Ok(rep)
}
