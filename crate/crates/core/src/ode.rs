//! Dormand–Prince 5(4) integrator with dense output for complex systems.
//!
//! Step size control and the continuous extension follow Hairer, Nørsett
//! and Wanner's DOPRI5: a PI controller on the scaled RMS error norm and a
//! fourth-order interpolant evaluated at requested output times.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step limit of {max_steps} reached at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("right-hand side failed at t = {t}: {message}")]
    Rhs { t: f64, message: String },
    #[error("output times must be non-decreasing and start at or after t0")]
    BadOutputGrid,
}

/// Right-hand side `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<(), String>;
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn err_norm(err: &[Complex64], y0: &[Complex64], y1: &[Complex64], o: &OdeOptions) -> f64 {
    let n = err.len();
    let mut s = 0.0;
    for i in 0..n {
        let sk = o.atol + o.rtol * y0[i].norm().max(y1[i].norm());
        s += err[i].norm_sqr() / (sk * sk);
    }
    (s / n as f64).sqrt()
}

struct Stages {
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    y_new: Vec<Complex64>,
    err: Vec<Complex64>,
}

/// Integrates from `t0` through every time in `outputs`, handing the first
/// `observe_len` components of the interpolated state to `observe`.
pub fn integrate<S: OdeSystem, F: FnMut(usize, f64, &[Complex64])>(
    sys: &S,
    t0: f64,
    y0: &[Complex64],
    outputs: &[f64],
    observe_len: usize,
    opts: &OdeOptions,
    mut observe: F,
) -> Result<(Vec<Complex64>, OdeStats), OdeError> {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "initial state has wrong dimension");
    let m = observe_len.min(n);
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&t| t < t0) {
        return Err(OdeError::BadOutputGrid);
    }
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] == t0 {
        observe(next_out, t0, &y[..m]);
        next_out += 1;
    }
    let Some(&t_end) = outputs.last() else {
        return Ok((y, stats));
    };
    if next_out == outputs.len() {
        return Ok((y, stats));
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut st = Stages {
        k: std::array::from_fn(|_| vec![zero; n]),
        tmp: vec![zero; n],
        y_new: vec![zero; n],
        err: vec![zero; n],
    };
    let call = |t: f64, y: &[Complex64], dy: &mut [Complex64], stats: &mut OdeStats| {
        stats.rhs_evals += 1;
        sys.rhs(t, y, dy).map_err(|message| OdeError::Rhs { t, message })
    };
    call(t, &y, &mut st.k[0], &mut stats)?;

    // initial step guess
    let mut h = {
        let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.norm()).collect();
        let rms = |v: &[Complex64]| {
            (v.iter().zip(&sk).map(|(a, s)| a.norm_sqr() / (s * s)).sum::<f64>() / n as f64).sqrt()
        };
        let d0 = rms(&y);
        let d1 = rms(&st.k[0]);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(opts.h_max).min(t_end - t);
        for i in 0..n {
            st.tmp[i] = y[i] + st.k[0][i] * h0;
        }
        call(t + h0, &st.tmp.clone(), &mut st.k[1], &mut stats)?;
        let diff: Vec<Complex64> = st.k[1].iter().zip(&st.k[0]).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dm).powf(0.2)
        };
        (100.0 * h0).min(h1).min(opts.h_max)
    };

    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut dense: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![zero; m]);
    let mut obs_buf = vec![zero; m];
    let steps_cap = opts.max_steps;
    loop {
        if stats.accepted + stats.rejected >= steps_cap {
            return Err(OdeError::TooManySteps {
                t,
                max_steps: steps_cap,
            });
        }
        if h.abs() < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let last = t + h >= t_end || (t_end - t - h).abs() <= 1e-12 * t_end.abs().max(1.0);
        if last {
            h = t_end - t;
        }
        // stages
        {
            let (k1, rest) = st.k.split_at_mut(1);
            let k1 = &k1[0];
            for i in 0..n {
                st.tmp[i] = y[i] + k1[i] * (h * A21);
            }
            call(t + C2 * h, &st.tmp, &mut rest[0], &mut stats)?;
            let k2 = &rest[0];
            for i in 0..n {
                st.tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
            }
            let (k2s, rest2) = rest.split_at_mut(1);
            let k2 = &k2s[0];
            call(t + C3 * h, &st.tmp, &mut rest2[0], &mut stats)?;
            let k3 = &rest2[0];
            for i in 0..n {
                st.tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
            }
            let (k3s, rest3) = rest2.split_at_mut(1);
            let k3 = &k3s[0];
            call(t + C4 * h, &st.tmp, &mut rest3[0], &mut stats)?;
            let k4 = &rest3[0];
            for i in 0..n {
                st.tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
            }
            let (k4s, rest4) = rest3.split_at_mut(1);
            let k4 = &k4s[0];
            call(t + C5 * h, &st.tmp, &mut rest4[0], &mut stats)?;
            let k5 = &rest4[0];
            for i in 0..n {
                st.tmp[i] = y[i]
                    + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
            }
            let (k5s, rest5) = rest4.split_at_mut(1);
            let k5 = &k5s[0];
            call(t + h, &st.tmp, &mut rest5[0], &mut stats)?;
            let k6 = &rest5[0];
            for i in 0..n {
                st.y_new[i] = y[i]
                    + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
            }
            let (k6s, rest6) = rest5.split_at_mut(1);
            let k6 = &k6s[0];
            call(t + h, &st.y_new, &mut rest6[0], &mut stats)?;
            let k7 = &rest6[0];
            for i in 0..n {
                st.err[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6
                    + k7[i] * E7)
                    * h;
            }
        }
        let err = err_norm(&st.err, &y, &st.y_new, opts);
        if !err.is_finite() {
            stats.rejected += 1;
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }
        let expo = 0.2 - BETA * 0.75;
        let fac11 = err.powf(expo);
        if err <= 1.0 {
            stats.accepted += 1;
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            let t_new = if last { t_end } else { t + h };
            if next_out < outputs.len() && outputs[next_out] <= t_new {
                let k = &st.k;
                for i in 0..m {
                    let ydiff = st.y_new[i] - y[i];
                    let bspl = k[0][i] * h - ydiff;
                    dense[0][i] = y[i];
                    dense[1][i] = ydiff;
                    dense[2][i] = bspl;
                    dense[3][i] = ydiff - k[6][i] * h - bspl;
                    dense[4][i] = (k[0][i] * D1 + k[2][i] * D3 + k[3][i] * D4 + k[4][i] * D5
                        + k[5][i] * D6
                        + k[6][i] * D7)
                        * h;
                }
                while next_out < outputs.len() && outputs[next_out] <= t_new {
                    let to = outputs[next_out];
                    if to == t_new {
                        obs_buf.copy_from_slice(&st.y_new[..m]);
                    } else {
                        let th = (to - t) / h;
                        let th1 = 1.0 - th;
                        for i in 0..m {
                            obs_buf[i] = dense[0][i]
                                + (dense[1][i]
                                    + (dense[2][i] + (dense[3][i] + dense[4][i] * th1) * th) * th1)
                                    * th;
                        }
                    }
                    observe(next_out, to, &obs_buf);
                    next_out += 1;
                }
            }
            std::mem::swap(&mut y, &mut st.y_new);
            st.k.swap(0, 6);
            t = t_new;
            rejected_last = false;
            if last || next_out >= outputs.len() {
                return Ok((y, stats));
            }
            h = h_new.min(opts.h_max);
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            rejected_last = true;
        }
    }
}
