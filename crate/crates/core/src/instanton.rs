//! The Q-pairing, the instanton ODE dPhi/dt = -Q(Phi, Phi), and operations on
//! its solutions.

use crate::algebra::RealSemisimpleAlgebra;
use crate::element::GVector;
use crate::error::{OrbitError, Result};
use crate::ode::{self, OdeFailure, OdeOptions, OdeStats};
use crate::sl2kit::SlHom;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Q(Phi1, Phi2)[u, v] = 1/2([Phi1 u, Phi2 v] - [Phi1 v, Phi2 u]), read off on
/// the pairs (h, e), (h, f), (e, f).
pub fn q_pairing(alg: &RealSemisimpleAlgebra, p1: &SlHom, p2: &SlHom) -> SlHom {
    let b = |x: &GVector, y: &GVector| alg.bracket(x, y);
    let e = (&b(&p1.h, &p2.e) + &b(&p2.h, &p1.e)).scale(0.25);
    let f = (&b(&p1.h, &p2.f) + &b(&p2.h, &p1.f)).scale(-0.25);
    let h = (&b(&p1.e, &p2.f) - &b(&p1.f, &p2.e)).scale(0.5);
    let mut out = SlHom::new(e, f, h);
    out.flags.real = p1.flags.real && p2.flags.real;
    out.flags.theta_compatible = p1.flags.theta_compatible && p2.flags.theta_compatible;
    out
}

pub fn try_q_pairing(alg: &RealSemisimpleAlgebra, p1: &SlHom, p2: &SlHom) -> Result<SlHom> {
    alg.ensure_dim(&p1.e)?;
    alg.ensure_dim(&p2.e)?;
    Ok(q_pairing(alg, p1, p2))
}

/// Morphisms are the non-zero fixed points of Phi -> Q(Phi, Phi).
pub fn is_morphism(alg: &RealSemisimpleAlgebra, phi: &SlHom, tol: f64) -> bool {
    if phi.amax() == 0.0 {
        return false;
    }
    q_pairing(alg, phi, phi).sub(phi).norm(alg) < tol
}

pub fn ode_rhs(alg: &RealSemisimpleAlgebra, phi: &SlHom) -> SlHom {
    let mut out = q_pairing(alg, phi, phi).scale(-1.0);
    out.flags = phi.flags;
    out
}

/// Same right-hand side in triple form: 2E' = -[H,E], 2F' = [H,F], H' = -[E,F].
pub fn ode_rhs_triple(alg: &RealSemisimpleAlgebra, phi: &SlHom) -> SlHom {
    let e = alg.bracket(&phi.h, &phi.e).scale(-0.5);
    let f = alg.bracket(&phi.h, &phi.f).scale(0.5);
    let h = alg.bracket(&phi.e, &phi.f).scale(-1.0);
    SlHom::new(e, f, h)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub rtol: f64,
    pub atol: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl TrajectoryMeta {
    fn from(opts: &OdeOptions, stats: &OdeStats) -> Self {
        Self {
            rtol: opts.rtol,
            atol: opts.atol,
            accepted: stats.accepted,
            rejected: stats.rejected,
            evaluations: stats.evaluations,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<SlHom>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> (f64, &SlHom) {
        (*self.times.last().unwrap(), self.values.last().unwrap())
    }

    /// Rows: t, then re/im interleaved coefficients of Phi(e), Phi(f), Phi(h).
    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(t, v)| {
                let mut row = vec![*t];
                for x in v.values() {
                    for j in 0..x.dim() {
                        row.push(x.re[j]);
                        row.push(x.im[j]);
                    }
                }
                row
            })
            .collect()
    }
}

pub fn default_ode_options() -> OdeOptions {
    OdeOptions { rtol: 1e-10, atol: 1e-12, ..OdeOptions::default() }
}

const BLOWUP_NORM: f64 = 1e12;

fn propagate(
    alg: &RealSemisimpleAlgebra,
    start: &SlHom,
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
    mut record: impl FnMut(f64, &SlHom),
) -> Result<(SlHom, OdeStats)> {
    let mut blew: Option<f64> = None;
    let rhs = |_t: f64, y: &DVector<f64>| ode_rhs(alg, &SlHom::from_stacked(y)).to_stacked();
    let out = ode::integrate(rhs, t0, start.to_stacked(), t1, opts, |t, y| {
        if y.amax() > BLOWUP_NORM {
            blew = Some(t);
            return false;
        }
        record(t, &SlHom::from_stacked(y));
        true
    });
    if let Some(t) = blew {
        return Err(OrbitError::BlowUp(t));
    }
    match out {
        Ok((_, y, stats)) => {
            let mut v = SlHom::from_stacked(&y);
            v.flags = start.flags;
            Ok((v, stats))
        }
        Err(OdeFailure::StepUnderflow { t }) | Err(OdeFailure::NonFinite { t }) => Err(OrbitError::BlowUp(t)),
        Err(OdeFailure::MaxSteps { steps }) => Err(OrbitError::MaxIterations(steps)),
    }
}

/// Integrates from t0 to t1 (either direction), recording every accepted step.
pub fn integrate(
    alg: &RealSemisimpleAlgebra,
    start: &SlHom,
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    alg.ensure_dim(&start.e)?;
    let mut times = vec![t0];
    let mut values = vec![start.clone()];
    let flags = start.flags;
    let (_, stats) = propagate(alg, start, t0, t1, opts, |t, v| {
        let mut v = v.clone();
        v.flags = flags;
        times.push(t);
        values.push(v);
    })?;
    Ok(Trajectory { times, values, meta: TrajectoryMeta::from(opts, &stats) })
}

/// Integrates from (t0, start) and samples exactly at the given monotone times.
pub fn integrate_at(
    alg: &RealSemisimpleAlgebra,
    start: &SlHom,
    t0: f64,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Trajectory> {
    alg.ensure_dim(&start.e)?;
    let mut cur = start.clone();
    let mut tc = t0;
    let mut values = Vec::with_capacity(times.len());
    let mut total = OdeStats::default();
    for &t in times {
        let (v, stats) = propagate(alg, &cur, tc, t, opts, |_, _| {})?;
        total.accepted += stats.accepted;
        total.rejected += stats.rejected;
        total.evaluations += stats.evaluations;
        cur = v;
        tc = t;
        values.push(cur.clone());
    }
    Ok(Trajectory { times: times.to_vec(), values, meta: TrajectoryMeta::from(opts, &total) })
}

/// The value at t1 of the solution through (t0, start).
pub fn flow_to(alg: &RealSemisimpleAlgebra, start: &SlHom, t0: f64, t1: f64, opts: &OdeOptions) -> Result<SlHom> {
    propagate(alg, start, t0, t1, opts, |_, _| {}).map(|(v, _)| v)
}

/// A solution curve represented by one point on it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstantonCurve {
    pub t_anchor: f64,
    pub value: SlHom,
}

impl InstantonCurve {
    pub fn new(t_anchor: f64, value: SlHom) -> Self {
        Self { t_anchor, value }
    }

    pub fn eval(&self, alg: &RealSemisimpleAlgebra, t: f64, opts: &OdeOptions) -> Result<SlHom> {
        flow_to(alg, &self.value, self.t_anchor, t, opts)
    }

    pub fn sample(&self, alg: &RealSemisimpleAlgebra, times: &[f64], opts: &OdeOptions) -> Result<Trajectory> {
        let mut vals = Vec::new();
        let mut total = OdeStats::default();
        let (mut tc, mut cur) = (self.t_anchor, self.value.clone());
        for &t in times {
            let (v, s) = propagate(alg, &cur, tc, t, opts, |_, _| {})?;
            total.accepted += s.accepted;
            total.rejected += s.rejected;
            total.evaluations += s.evaluations;
            vals.push(v.clone());
            cur = v;
            tc = t;
        }
        Ok(Trajectory { times: times.to_vec(), values: vals, meta: TrajectoryMeta::from(opts, &total) })
    }

    /// (C_a Psi)(t) = a Psi(a(t+1) - 1).
    pub fn c_a(&self, a: f64) -> Result<Self> {
        check_c_a(a)?;
        Ok(Self { t_anchor: (self.t_anchor + 1.0) / a - 1.0, value: self.value.scale(a) })
    }

    /// t -> a Phi(a t).
    pub fn scale_flow(&self, a: f64) -> Result<Self> {
        check_scale(a)?;
        Ok(Self { t_anchor: self.t_anchor / a, value: self.value.scale(a) })
    }
}

fn check_c_a(a: f64) -> Result<()> {
    if !(a >= 1.0 && a.is_finite()) {
        return Err(OrbitError::InvalidParams(format!("C_a needs a >= 1, got {a}")));
    }
    Ok(())
}

fn check_scale(a: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(OrbitError::InvalidParams(format!("scaling needs a > 0, got {a}")));
    }
    Ok(())
}

/// C_a applied to a sampled trajectory: sample (t, Phi) becomes
/// ((t+1)/a - 1, a Phi).
pub fn c_a(traj: &Trajectory, a: f64) -> Result<Trajectory> {
    check_c_a(a)?;
    Ok(Trajectory {
        times: traj.times.iter().map(|t| (t + 1.0) / a - 1.0).collect(),
        values: traj.values.iter().map(|v| v.scale(a)).collect(),
        meta: traj.meta,
    })
}

/// C_a on initial data: the value at t = 0 of C_a Psi, i.e. a Psi(a - 1).
pub fn c_a_initial(alg: &RealSemisimpleAlgebra, psi0: &SlHom, a: f64, opts: &OdeOptions) -> Result<SlHom> {
    check_c_a(a)?;
    Ok(flow_to(alg, psi0, 0.0, a - 1.0, opts)?.scale(a))
}

pub fn scale_flow(traj: &Trajectory, a: f64) -> Result<Trajectory> {
    check_scale(a)?;
    Ok(Trajectory {
        times: traj.times.iter().map(|t| t / a).collect(),
        values: traj.values.iter().map(|v| v.scale(a)).collect(),
        meta: traj.meta,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitFit {
    pub phi0: SlHom,
    pub fit_residual: f64,
    pub morphism_residual: f64,
}

/// Estimates lim t Phi(t) by fitting t Phi(t) = c0 + c1/t + c2 t^{-3/2} + c3/t^2
/// on the tail of the trajectory.
pub fn extract_limit(alg: &RealSemisimpleAlgebra, traj: &Trajectory) -> Result<LimitFit> {
    let t_end = *traj.times.last().ok_or(OrbitError::NotConverged(f64::INFINITY))?;
    let idx: Vec<usize> = (0..traj.times.len()).filter(|&i| traj.times[i] >= t_end / 20.0 && traj.times[i] > 0.0).collect();
    if idx.len() < 6 {
        return Err(OrbitError::NotConverged(f64::INFINITY));
    }
    let exps = [0.0, 1.0, 1.5, 2.0];
    let a = DMatrix::from_fn(idx.len(), exps.len(), |i, j| traj.times[idx[i]].powf(-exps[j]));
    let ys: Vec<DVector<f64>> = idx.iter().map(|&i| traj.values[i].to_stacked() * traj.times[i]).collect();
    let m = ys[0].len();
    let y = DMatrix::from_fn(idx.len(), m, |i, j| ys[i][j]);
    let pinv = crate::linalg::pinv(&a, 1e-14);
    let coef = &pinv * &y;
    let resid = (&a * &coef - &y).amax();
    let scale = y.amax().max(1e-300);
    let c0 = DVector::from_fn(m, |j, _| coef[(0, j)]);
    let mut phi0 = SlHom::from_stacked(&c0);
    phi0.refresh_flags(alg, 1e-6);
    let morph = q_pairing(alg, &phi0, &phi0).sub(&phi0).norm(alg);
    let fit_residual = resid / scale;
    if fit_residual > 1e-6 || !is_morphism(alg, &phi0, 1e-6) {
        return Err(OrbitError::NotConverged(fit_residual.max(morph)));
    }
    Ok(LimitFit { phi0, fit_residual, morphism_residual: morph })
}
