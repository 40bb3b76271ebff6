//! Dormand-Prince 5(4) integrator with adaptive step control.

use nalgebra::DVector;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Largest allowed step (absolute).
    pub h_max: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 2_000_000, h_max: f64::INFINITY }
    }
}

#[derive(Clone, Copy, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeFailure {
    StepUnderflow { t: f64 },
    NonFinite { t: f64 },
    MaxSteps { steps: usize },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction). After each
/// accepted step `on_step(t, &mut y)` may modify the state (e.g. project it)
/// and returns `false` to stop early. Returns the final time and state.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: DVector<f64>,
    t1: f64,
    opts: &OdeOptions,
    mut on_step: O,
) -> Result<(f64, DVector<f64>, OdeStats), OdeFailure>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    O: FnMut(f64, &mut DVector<f64>) -> bool,
{
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0;
    if t1 == t0 {
        return Ok((t, y, stats));
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = {
        let yn = y.amax().max(1e-6);
        let fnorm = k1.amax().max(1e-12);
        (0.01 * yn / fnorm).min(span).min(opts.h_max)
    };
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeFailure::MaxSteps { steps: stats.accepted + stats.rejected });
        }
        let remaining = (t1 - t).abs();
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) && !last {
            return Err(OdeFailure::StepUnderflow { t });
        }
        let s = dir * h;
        let k2 = f(t + C2 * s, &(&y + &k1 * (s * A21)));
        let k3 = f(t + C3 * s, &(&y + (&k1 * A31 + &k2 * A32) * s));
        let k4 = f(t + C4 * s, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * s));
        let k5 = f(t + C5 * s, &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * s));
        let k6 = f(t + s, &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * s));
        let y_new = &y + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * s;
        let k7 = f(t + s, &y_new);
        stats.evaluations += 6;
        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * s;
        if !y_new.iter().all(|v| v.is_finite()) || !err_vec.iter().all(|v| v.is_finite()) {
            stats.rejected += 1;
            h *= 0.1;
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(OdeFailure::NonFinite { t });
            }
            continue;
        }
        let scale = opts.atol + opts.rtol * y.amax().max(y_new.amax());
        let err = err_vec.amax() / scale;
        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + s };
            y = y_new;
            let keep_going = on_step(t, &mut y);
            k1 = f(t, &y);
            stats.evaluations += 1;
            if last || !keep_going {
                return Ok((t, y, stats));
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(opts.h_max);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}
