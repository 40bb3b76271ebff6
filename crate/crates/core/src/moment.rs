//! The moment map of the adjoint action, criticality, and gradient descent of
//! its norm square on the unit sphere of an orbit.

use crate::algebra::{CMatrix, RealSemisimpleAlgebra};
use crate::element::GVector;
use crate::error::{OrbitError, Result};
use serde::{Deserialize, Serialize};

/// m(zeta) = -[zeta, tau zeta] / |zeta|^2 with tau zeta = theta(conj zeta).
pub fn moment_map(alg: &RealSemisimpleAlgebra, zeta: &GVector) -> Result<GVector> {
    alg.ensure_dim(zeta)?;
    let n2 = alg.norm_sq(zeta);
    if n2 == 0.0 {
        return Err(OrbitError::ZeroElement);
    }
    Ok(alg.bracket(zeta, &alg.tau(zeta)).scale(-1.0 / n2))
}

pub fn moment_norm_sq(alg: &RealSemisimpleAlgebra, zeta: &GVector) -> Result<f64> {
    Ok(alg.norm_sq(&moment_map(alg, zeta)?))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Criticality {
    pub critical: bool,
    pub a: f64,
    pub residual: f64,
}

/// Tests [[zeta, tau zeta], zeta] = a zeta with real a < 0.
pub fn is_critical(alg: &RealSemisimpleAlgebra, zeta: &GVector, tol: f64) -> Result<Criticality> {
    alg.ensure_dim(zeta)?;
    let n2 = alg.norm_sq(zeta);
    if n2 == 0.0 {
        return Err(OrbitError::ZeroElement);
    }
    let v = alg.bracket(&alg.bracket(zeta, &alg.tau(zeta)), zeta);
    let a = alg.inner(&v, zeta).re / n2;
    let residual = alg.norm(&(&v - &zeta.scale(a)));
    Ok(Criticality { critical: residual < tol * n2.sqrt() && a < 0.0, a, residual })
}

/// Negative gradient of |m|^2 restricted to the unit sphere, at unit zeta.
pub fn descent_field(alg: &RealSemisimpleAlgebra, zeta: &GVector) -> Result<GVector> {
    let m = moment_map(alg, zeta)?;
    let w = alg.bracket(&m, zeta);
    let proj = alg.inner(&w, zeta).re / alg.norm_sq(zeta);
    Ok((&w - &zeta.scale(proj)).scale(-2.0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DescentOptions {
    pub grad_tol: f64,
    pub crit_tol: f64,
    pub t_max: f64,
    pub max_steps: usize,
    /// Initial and largest flow-time step.
    pub step0: f64,
    pub step_max: f64,
    pub nilpotency_tol: f64,
    /// Record every accepted step in the trajectory.
    pub record: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            crit_tol: 1e-7,
            t_max: 1e5,
            max_steps: 200_000,
            step0: 0.05,
            step_max: 2.0,
            nilpotency_tol: 1e-6,
            record: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DescentSample {
    pub t: f64,
    pub m_norm_sq: f64,
    pub a: f64,
    pub zeta: GVector,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DescentResult {
    pub core: GVector,
    pub m_norm_sq: f64,
    pub a: f64,
    pub steps: usize,
    pub t_final: f64,
    /// Largest increase of |m|^2 between consecutive accepted steps.
    pub max_increase: f64,
    pub trajectory: Vec<DescentSample>,
}

fn sample(alg: &RealSemisimpleAlgebra, t: f64, z: &GVector) -> DescentSample {
    let m_norm_sq = moment_norm_sq(alg, z).unwrap_or(f64::NAN);
    let a = is_critical(alg, z, 1.0).map(|c| c.a).unwrap_or(f64::NAN);
    DescentSample { t, m_norm_sq, a, zeta: z.clone() }
}

fn step_matrix(alg: &RealSemisimpleAlgebra, x: &GVector) -> CMatrix {
    if x.is_real(0.0) {
        alg.exp_ad_real(&x.re).map(|v| nalgebra::Complex::new(v, 0.0))
    } else {
        alg.exp_ad(x)
    }
}

/// Flows the unit-normalized seed down the gradient of |m|^2 until it reaches
/// a critical point, which is returned with unit length.
///
/// The flow zeta' = -2[m(zeta), zeta] is stepped on the group: the accumulated
/// transformation g <- exp(ad(-2h m)) g is kept and the iterate is recomputed
/// as g zeta0 / |g zeta0|. Nearby non-nilpotent orbits flow away from the
/// nilpotent cone, so stepping zeta itself would amplify rounding errors off
/// the orbit; through g they stay at rounding level. Steps are accepted under an Armijo condition on |m|^2, or near
/// the minimum, where |m|^2 no longer resolves the decrease, when the gradient
/// norm contracts. If no step is acceptable the iterate is returned when it
/// already passes the criticality test.
pub fn descend_to_core(
    alg: &RealSemisimpleAlgebra,
    zeta0: &GVector,
    opts: &DescentOptions,
) -> Result<DescentResult> {
    alg.ensure_dim(zeta0)?;
    let n0 = alg.norm(zeta0);
    if n0 == 0.0 {
        return Err(OrbitError::ZeroElement);
    }
    let nil0 = alg.nilpotency_residual(zeta0);
    if nil0 > opts.nilpotency_tol {
        return Err(OrbitError::NotNilpotent(nil0));
    }
    let base = zeta0.scale(1.0 / n0);
    let mut g = CMatrix::identity(alg.dim(), alg.dim());
    let mut z = base.clone();
    let mut traj = Vec::new();
    let first = sample(alg, 0.0, &z);
    let mut f0 = first.m_norm_sq;
    if opts.record {
        traj.push(first);
    }
    let mut max_increase: f64 = 0.0;
    let mut t = 0.0;
    let mut h = opts.step0;
    let mut steps = 0usize;
    loop {
        let gn = alg.norm(&descent_field(alg, &z)?);
        if gn < opts.grad_tol && is_critical(alg, &z, opts.crit_tol)?.critical {
            break;
        }
        if steps >= opts.max_steps || t > opts.t_max {
            return Err(OrbitError::MaxIterations(steps));
        }
        let m = moment_map(alg, &z)?;
        let accepted = loop {
            let mut cg = step_matrix(alg, &m.scale(-2.0 * h)) * &g;
            let raw = RealSemisimpleAlgebra::apply_complex(&cg, &base);
            let c = alg.norm(&raw);
            if !(c.is_finite() && c > 0.0) {
                h *= 0.5;
                if h < 1e-14 {
                    break None;
                }
                continue;
            }
            cg.unscale_mut(c);
            let cand = raw.scale(1.0 / c);
            let f1 = moment_norm_sq(alg, &cand)?;
            let resolvable = h * gn * gn > 1e-10;
            if resolvable && f1 <= f0 - 0.5 * h * gn * gn {
                break Some((cand, cg, f1));
            }
            if !resolvable && f1 <= f0 + 1e-14 && alg.norm(&descent_field(alg, &cand)?) < gn {
                break Some((cand, cg, f1));
            }
            h *= 0.5;
            if h < 1e-14 {
                break None;
            }
        };
        let Some((cand, cg, f1)) = accepted else {
            // Stalled at the rounding floor: accept if already critical.
            if is_critical(alg, &z, opts.crit_tol)?.critical {
                break;
            }
            return Err(OrbitError::NotConverged(gn));
        };
        max_increase = max_increase.max(f1 - f0);
        f0 = f1;
        z = cand;
        g = cg;
        t += h;
        steps += 1;
        h = (h * 1.5).min(opts.step_max);
        if steps.is_multiple_of(50) {
            let nil = alg.nilpotency_residual(&z);
            if nil > opts.nilpotency_tol {
                return Err(OrbitError::LeftOrbit(nil));
            }
        }
        if opts.record {
            traj.push(sample(alg, t, &z));
        }
    }
    let nil = alg.nilpotency_residual(&z);
    if nil > opts.nilpotency_tol {
        return Err(OrbitError::LeftOrbit(nil));
    }
    let c = is_critical(alg, &z, opts.crit_tol)?;
    Ok(DescentResult { m_norm_sq: moment_norm_sq(alg, &z)?, a: c.a, core: z, steps, t_final: t, max_increase, trajectory: traj })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentSplit {
    pub m1: GVector,
    pub m2: GVector,
    pub m3: GVector,
}

/// m = m1 + m2 + m3 with m1 along xi, m2 in p_R orthogonal to xi, m3 in i k_R.
pub fn split_m_123(alg: &RealSemisimpleAlgebra, zeta_t: &GVector, xi: &GVector) -> Result<MomentSplit> {
    let xn = alg.norm_sq(xi);
    if xn == 0.0 {
        return Err(OrbitError::ZeroXi);
    }
    let m = moment_map(alg, zeta_t)?;
    let (_, mp) = alg.cartan_split(&m);
    let real_p = mp.real_part();
    let c = alg.inner(&real_p, xi).re / xn;
    let m1 = xi.scale(c);
    let m2 = &real_p - &m1;
    // For m in i u_R this is exactly the i k_R component.
    let m3 = &m - &real_p;
    Ok(MomentSplit { m1, m2, m3 })
}

fn critical_defect(alg: &RealSemisimpleAlgebra, z: &GVector) -> GVector {
    let v = alg.bracket(&alg.bracket(z, &alg.tau(z)), z);
    let a = alg.inner(&v, z).re / alg.norm_sq(z);
    (&v - &z.scale(a)).scale(1.0 / alg.norm_sq(z).powf(1.5))
}

/// Refines an approximate critical point by Gauss-Newton on the criticality
/// defect. Critical points are isolated modulo K and scaling, so the result is
/// the nearest exact core point. The update is real when zeta is real.
pub fn polish_core(alg: &RealSemisimpleAlgebra, zeta: &GVector, tol: f64, max_iter: usize) -> Result<GVector> {
    alg.ensure_dim(zeta)?;
    let n = alg.dim();
    let real = zeta.is_real(0.0);
    let nu = if real { n } else { 2 * n };
    let unit = |z: GVector| z.scale(1.0 / alg.norm(&z));
    let mut z = unit(zeta.clone());
    let mv = |x: &nalgebra::DVector<f64>| {
        if real {
            GVector::real(x.clone())
        } else {
            GVector::from_stacked(x)
        }
    };
    let h = 1e-7;
    for _ in 0..max_iter {
        let r = critical_defect(alg, &z).to_stacked();
        if r.amax() < tol {
            return Ok(z);
        }
        let mut jac = nalgebra::DMatrix::zeros(r.len(), nu);
        for j in 0..nu {
            let mut e = nalgebra::DVector::zeros(nu);
            e[j] = h;
            let zp = &z + &mv(&e);
            let zm = &z - &mv(&e);
            let col = (critical_defect(alg, &zp).to_stacked() - critical_defect(alg, &zm).to_stacked()) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let step = -crate::linalg::lstsq(&jac, &r, 1e-10);
        let mut lam = 1.0;
        loop {
            let cand = unit(&z + &mv(&(&step * lam)));
            if critical_defect(alg, &cand).to_stacked().amax() < r.amax() {
                z = cand;
                break;
            }
            lam *= 0.5;
            if lam < 1e-6 {
                return Err(OrbitError::NotConverged(r.amax()));
            }
        }
    }
    let r = critical_defect(alg, &z).amax();
    if r < tol { Ok(z) } else { Err(OrbitError::NotConverged(r)) }
}
