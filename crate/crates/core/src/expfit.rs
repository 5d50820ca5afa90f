//! Exponential-sum approximation of correlation kernels.
//!
//! A kernel sampled on `[0, tau0]` is approximated by
//! `sum_j G_j exp(-W_j tau)` with `Re W_j > 0`, minimising the relative
//! p-norm of the residual. Each restart draws random parameters and raises
//! the norm order in stages from 2 to `p`; every stage is a
//! Levenberg–Marquardt solve on the transformed residual
//! `r (|r| / s)^((p - 2) / 2)`, whose squared 2-norm is `|r|_p^p / s^(p - 2)`.

use crate::stocproc::derive_seed;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("exponential sum needs at least one term")]
    NoTerms,
    #[error("term {index} has non-positive decay rate {re_w}")]
    NonDecaying { index: usize, re_w: f64 },
    #[error("amplitude and rate lists differ in length ({g} vs {w})")]
    LengthMismatch { g: usize, w: usize },
    #[error("invalid fit setup: {0}")]
    InvalidSetup(String),
    #[error("sampled kernel is empty or identically zero")]
    EmptyTarget,
    #[error("optimizer did not converge on any of {restarts} restarts (best max_rel_error {:.3e})", .report.max_rel_error)]
    NotConverged {
        restarts: usize,
        best: ExponentialBcf,
        report: FitReport,
    },
    #[error("malformed fit file: {0}")]
    Parse(String),
}

/// `alpha(tau) = sum_j G_j exp(-W_j tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBcf {
    g: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl ExponentialBcf {
    pub fn new(g: Vec<Complex64>, w: Vec<Complex64>) -> Result<Self, FitError> {
        if g.len() != w.len() {
            return Err(FitError::LengthMismatch {
                g: g.len(),
                w: w.len(),
            });
        }
        if g.is_empty() {
            return Err(FitError::NoTerms);
        }
        for (index, wj) in w.iter().enumerate() {
            if !(wj.re > 0.0) {
                return Err(FitError::NonDecaying {
                    index,
                    re_w: wj.re,
                });
            }
        }
        Ok(Self { g, w })
    }

    pub fn n_terms(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[Complex64] {
        &self.g
    }

    pub fn w(&self) -> &[Complex64] {
        &self.w
    }

    pub fn eval(&self, tau: f64) -> Complex64 {
        self.g
            .iter()
            .zip(&self.w)
            .map(|(g, w)| g * (-w * tau).exp())
            .sum()
    }

    /// `Re sum_j G_j / (W_j - i w)`, the half-line Fourier transform.
    pub fn reconstruct_sd(&self, omega: f64) -> f64 {
        self.half_transform(omega).re
    }

    /// `sum_j G_j / (W_j - i w)`.
    pub fn half_transform(&self, omega: f64) -> Complex64 {
        let iw = Complex64::new(0.0, omega);
        self.g.iter().zip(&self.w).map(|(g, w)| g / (w - iw)).sum()
    }

    /// Multiplies every amplitude by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            g: self.g.iter().map(|g| g * c).collect(),
            w: self.w.clone(),
        }
    }
}

/// A kernel on the uniform grid `tau_i = i tau0 / (len - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    pub tau0: f64,
    pub values: Vec<Complex64>,
}

impl SampledKernel {
    pub const DEFAULT_POINTS: usize = 1000;

    pub fn from_fn(tau0: f64, points: usize, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..points).map(|i| f(Self::node(tau0, points, i))).collect();
        Self { tau0, values }
    }

    fn node(tau0: f64, points: usize, i: usize) -> f64 {
        tau0 * i as f64 / (points - 1) as f64
    }

    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.values.len();
        (0..n).map(move |i| Self::node(self.tau0, n, i))
    }

    pub fn dtau(&self) -> f64 {
        self.tau0 / (self.values.len() - 1) as f64
    }

    pub fn scale(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitErrors {
    pub rel_p_error: f64,
    pub max_rel_error: f64,
}

fn p_norm(values: impl Iterator<Item = f64>, p: f64) -> f64 {
    // scaled to avoid overflow for large p
    let v: Vec<f64> = values.collect();
    let m = v.iter().cloned().fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|x| (x / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Relative p-norm error and max error relative to `max |alpha|`.
pub fn fit_error(e: &ExponentialBcf, target: &SampledKernel, p: f64) -> Result<FitErrors, FitError> {
    if target.values.len() < 2 {
        return Err(FitError::EmptyTarget);
    }
    let scale = target.scale();
    if scale == 0.0 {
        return Err(FitError::EmptyTarget);
    }
    let diffs: Vec<f64> = target
        .taus()
        .zip(&target.values)
        .map(|(t, v)| (e.eval(t) - v).norm())
        .collect();
    let num = p_norm(diffs.iter().cloned(), p);
    let den = p_norm(target.values.iter().map(|v| v.norm()), p);
    let max_diff = diffs.iter().cloned().fold(0.0, f64::max);
    Ok(FitErrors {
        rel_p_error: num / den,
        max_rel_error: max_diff / scale,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_terms: usize,
    pub p: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Frequency scale of the kernel (e.g. the cutoff); estimated from the
    /// initial slope when absent.
    pub rate_scale: Option<f64>,
    /// Levenberg–Marquardt iterations per least-squares solve.
    pub max_iter: usize,
    /// Rescaled solves per norm order.
    pub max_reweight: usize,
}

impl FitOptions {
    pub fn new(n_terms: usize, p: f64) -> Self {
        Self {
            n_terms,
            p,
            restarts: 64,
            seed: 0,
            rate_scale: None,
            max_iter: 200,
            max_reweight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tau0: f64,
    pub p: f64,
    pub rel_p_error: f64,
    pub max_rel_error: f64,
    pub restarts_used: usize,
    pub converged_restarts: usize,
    pub best_restart: usize,
    pub grid_points: usize,
    pub seed: u64,
}

struct Restart {
    params: Vec<f64>,
    objective: f64,
    max_rel: f64,
    converged: bool,
}

/// Residual data in normalised units: `x in [0, 1]`, `max |y| = 1`.
struct Normalised {
    x: Vec<f64>,
    y: Vec<Complex64>,
}

const U_MAX: f64 = 40.0;

fn rate(u: f64, v: f64) -> Complex64 {
    Complex64::new(u.min(U_MAX).exp(), v)
}

fn model_residuals(params: &[f64], data: &Normalised) -> Vec<Complex64> {
    let n = params.len() / 4;
    data.x
        .iter()
        .zip(&data.y)
        .map(|(&x, &y)| {
            let mut s = -y;
            for j in 0..n {
                let g = Complex64::new(params[4 * j], params[4 * j + 1]);
                let w = rate(params[4 * j + 2], params[4 * j + 3]);
                s += g * (-w * x).exp();
            }
            s
        })
        .collect()
}

/// Residual transform `rho = |d/s|^q d/s` whose squared norm is the
/// p-norm objective with `q = (p - 2)/2`; `s` keeps the magnitudes O(1).
#[derive(Clone, Copy)]
struct Transform {
    q: f64,
    s: f64,
}

impl Transform {
    fn apply(&self, d: Complex64) -> Complex64 {
        let d = d / self.s;
        if self.q == 0.0 {
            d
        } else {
            d * d.norm().powf(self.q)
        }
    }

    /// Derivative of `apply` along `dd`, given the residual `d`.
    fn tangent(&self, d: Complex64, dd: Complex64) -> Complex64 {
        let d = d / self.s;
        let dd = dd / self.s;
        if self.q == 0.0 {
            return dd;
        }
        let a = d.norm();
        if a == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let aq = a.powf(self.q);
        dd * aq + d * (self.q * aq / (a * a) * (d.conj() * dd).re)
    }
}

/// Transformed residual vector (real/imag stacked) and its Jacobian.
fn linearise(params: &[f64], data: &Normalised, tr: Transform) -> (DVector<f64>, DMatrix<f64>) {
    let n = params.len() / 4;
    let m = data.x.len();
    let mut r = DVector::zeros(2 * m);
    let mut jac = DMatrix::zeros(2 * m, 4 * n);
    let mut derivs = vec![Complex64::new(0.0, 0.0); 4 * n];
    for i in 0..m {
        let x = data.x[i];
        let mut s = -data.y[i];
        for j in 0..n {
            let g = Complex64::new(params[4 * j], params[4 * j + 1]);
            let u = params[4 * j + 2];
            let w = rate(u, params[4 * j + 3]);
            let e = (-w * x).exp();
            s += g * e;
            let gxe = -g * x * e;
            derivs[4 * j] = e;
            derivs[4 * j + 1] = Complex64::i() * e;
            derivs[4 * j + 2] = if u < U_MAX { gxe * u.exp() } else { Complex64::new(0.0, 0.0) };
            derivs[4 * j + 3] = Complex64::i() * gxe;
        }
        for (k, d) in derivs.iter().enumerate() {
            let t = tr.tangent(s, *d);
            jac[(2 * i, k)] = t.re;
            jac[(2 * i + 1, k)] = t.im;
        }
        let rho = tr.apply(s);
        r[2 * i] = rho.re;
        r[2 * i + 1] = rho.im;
    }
    (r, jac)
}

fn transformed_cost(params: &[f64], data: &Normalised, tr: Transform) -> f64 {
    model_residuals(params, data)
        .iter()
        .map(|d| tr.apply(*d).norm_sqr())
        .sum::<f64>()
        * 0.5
}

/// Levenberg–Marquardt on the transformed residuals; returns whether a
/// convergence test was met before the iteration cap.
fn levenberg_marquardt(params: &mut [f64], data: &Normalised, tr: Transform, max_iter: usize) -> bool {
    let np = params.len();
    let (mut r, mut jac) = linearise(params, data, tr);
    let mut cost = 0.5 * r.norm_squared();
    let mut jtj = jac.tr_mul(&jac);
    let mut grad = jac.tr_mul(&r);
    let max_diag = (0..np).map(|k| jtj[(k, k)]).fold(0.0, f64::max);
    let mut lambda = 1e-3 * max_diag.max(1e-300);
    let mut nu = 2.0;
    for _ in 0..max_iter {
        if cost < 1e-32 || grad.amax() < 1e-15 * (1.0 + cost) {
            return true;
        }
        let mut a = jtj.clone();
        let diag_floor = 1e-12 * max_diag.max(1e-300);
        for k in 0..np {
            a[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
        let new_cost = transformed_cost(&trial, data, tr);
        // predicted reduction of the quadratic model
        let jd = &jac * &step;
        let predicted = -(grad.dot(&step) + 0.5 * jd.norm_squared());
        let rho = if predicted > 0.0 {
            (cost - new_cost) / predicted
        } else {
            -1.0
        };
        if rho > 0.0 && new_cost.is_finite() {
            let step_norm = step.norm();
            let p_norm: f64 = params.iter().map(|p| p * p).sum::<f64>().sqrt();
            let reduction = cost - new_cost;
            params.copy_from_slice(&trial);
            (r, jac) = linearise(params, data, tr);
            cost = 0.5 * r.norm_squared();
            jtj = jac.tr_mul(&jac);
            grad = jac.tr_mul(&r);
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if step_norm <= 1e-10 * (p_norm + 1e-10) || reduction <= 1e-12 * cost {
                return true;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e30 * max_diag.max(1.0) {
                return true;
            }
        }
    }
    false
}

/// Objective `|r|_p / |y|_p` and max residual on the normalised data.
fn objective(params: &[f64], data: &Normalised, p: f64) -> (f64, f64) {
    let res: Vec<f64> = model_residuals(params, data).iter().map(|r| r.norm()).collect();
    let num = p_norm(res.iter().cloned(), p);
    let den = p_norm(data.y.iter().map(|v| v.norm()), p);
    let max = res.iter().cloned().fold(0.0, f64::max);
    (num / den, max)
}

/// Norm orders of the continuation, ending at `p`.
fn norm_stages(p: f64) -> Vec<f64> {
    let mut stages = vec![2.0_f64.min(p)];
    let mut q = 4.0;
    while q < p {
        stages.push(q);
        q += 2.0;
    }
    if p > stages[stages.len() - 1] {
        stages.push(p);
    }
    stages
}

fn run_restart(data: &Normalised, opts: &FitOptions, rate_lo: f64, rate_hi: f64, seed: u64) -> Restart {
    let n = opts.n_terms;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g_scale = data.y[0].norm() / n as f64;
    let mut params = Vec::with_capacity(4 * n);
    for _ in 0..n {
        let gr: f64 = rng.sample(StandardNormal);
        let gi: f64 = rng.sample(StandardNormal);
        let re_w = (rate_lo.ln() + rng.gen::<f64>() * (rate_hi / rate_lo).ln()).exp();
        let im_w = rng.gen_range(-rate_hi..=rate_hi);
        params.extend_from_slice(&[
            gr * g_scale * std::f64::consts::FRAC_1_SQRT_2,
            gi * g_scale * std::f64::consts::FRAC_1_SQRT_2,
            re_w.ln(),
            im_w,
        ]);
    }
    let p_final = opts.p;
    let mut best = params.clone();
    let (mut best_obj, mut best_max) = objective(&params, data, p_final);
    let mut converged = false;
    let stages = norm_stages(p_final);
    for (si, &p) in stages.iter().enumerate() {
        for _ in 0..opts.max_reweight.max(1) {
            let (_, s) = objective(&params, data, p);
            let tr = Transform {
                q: 0.5 * (p - 2.0),
                s: s.max(1e-300),
            };
            let ok = levenberg_marquardt(&mut params, data, tr, opts.max_iter);
            if !params.iter().all(|v| v.is_finite()) {
                params.copy_from_slice(&best);
                break;
            }
            let (obj, max) = objective(&params, data, p_final);
            if obj < best_obj {
                best_obj = obj;
                best_max = max;
                best.copy_from_slice(&params);
            }
            if ok {
                if si + 1 == stages.len() {
                    converged = true;
                }
                break;
            }
        }
    }
    Restart {
        params: best,
        objective: best_obj,
        max_rel: best_max,
        converged,
    }
}

/// Multi-start fit of `target` by `opts.n_terms` exponentials.
pub fn fit_bcf(target: &SampledKernel, opts: &FitOptions) -> Result<(ExponentialBcf, FitReport), FitError> {
    let n = opts.n_terms;
    if n == 0 {
        return Err(FitError::NoTerms);
    }
    if !(opts.p >= 1.0) {
        return Err(FitError::InvalidSetup(format!("norm order {} < 1", opts.p)));
    }
    if opts.restarts == 0 {
        return Err(FitError::InvalidSetup("zero restarts".into()));
    }
    let m = target.values.len();
    if m < 20 * n {
        return Err(FitError::InvalidSetup(format!(
            "{m} grid points is fewer than 20 per term"
        )));
    }
    let scale = target.scale();
    if !(scale > 0.0) || !(target.tau0 > 0.0) {
        return Err(FitError::EmptyTarget);
    }
    let tau0 = target.tau0;
    let data = Normalised {
        x: target.taus().map(|t| t / tau0).collect(),
        y: target.values.iter().map(|v| v / scale).collect(),
    };
    // rate range in units of 1/tau0
    let nyquist = std::f64::consts::PI / target.dtau();
    let omega = opts.rate_scale.unwrap_or_else(|| {
        let d = (target.values[1] - target.values[0]).norm() / target.dtau();
        (d / target.values[0].norm().max(1e-300)).max(1.0 / tau0)
    });
    let rate_hi = (10.0 * omega).min(nyquist).max(2.0 / tau0) * tau0;
    let rate_lo = 1.0;

    let restarts: Vec<Restart> = (0..opts.restarts)
        .into_par_iter()
        .map(|k| run_restart(&data, opts, rate_lo, rate_hi, derive_seed(opts.seed, k as u64, 0)))
        .collect();
    let (best_idx, best) = restarts
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.objective
                .total_cmp(&b.objective)
                .then(a.max_rel.total_cmp(&b.max_rel))
                .then(ia.cmp(ib))
        })
        .expect("at least one restart");
    let converged_restarts = restarts.iter().filter(|r| r.converged).count();

    let mut g = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for j in 0..n {
        let pj = &best.params[4 * j..4 * j + 4];
        g.push(Complex64::new(pj[0], pj[1]) * scale);
        w.push(rate(pj[2], pj[3]) / tau0);
    }
    let e = ExponentialBcf::new(g, w)?;
    let errs = fit_error(&e, target, opts.p)?;
    let report = FitReport {
        tau0,
        p: opts.p,
        rel_p_error: errs.rel_p_error,
        max_rel_error: errs.max_rel_error,
        restarts_used: opts.restarts,
        converged_restarts,
        best_restart: best_idx,
        grid_points: m,
        seed: opts.seed,
    };
    if converged_restarts == 0 {
        return Err(FitError::NotConverged {
            restarts: opts.restarts,
            best: e,
            report,
        });
    }
    Ok((e, report))
}

/// Text form: header `N p tau0 max_rel_err`, then `Re(G) Im(G) Re(W) Im(W)`
/// per term.
pub fn to_text(e: &ExponentialBcf, p: f64, tau0: f64, max_rel_error: f64) -> String {
    let mut s = String::new();
    writeln!(s, "{} {:.16e} {:.16e} {:.16e}", e.n_terms(), p, tau0, max_rel_error).unwrap();
    for (g, w) in e.g.iter().zip(&e.w) {
        writeln!(s, "{:.16e} {:.16e} {:.16e} {:.16e}", g.re, g.im, w.re, w.im).unwrap();
    }
    s
}

/// Header fields of a fit file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitHeader {
    pub p: f64,
    pub tau0: f64,
    pub max_rel_error: f64,
}

pub fn from_text(text: &str) -> Result<(ExponentialBcf, FitHeader), FitError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| FitError::Parse("empty file".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 {
        return Err(FitError::Parse(format!("header has {} fields", h.len())));
    }
    let n: usize = h[0].parse().map_err(|e| FitError::Parse(format!("term count: {e}")))?;
    let num = |s: &str| -> Result<f64, FitError> {
        s.parse::<f64>().map_err(|e| FitError::Parse(format!("{s:?}: {e}")))
    };
    let head = FitHeader {
        p: num(h[1])?,
        tau0: num(h[2])?,
        max_rel_error: num(h[3])?,
    };
    let mut g = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(FitError::Parse(format!("term line has {} fields", f.len())));
        }
        g.push(Complex64::new(num(f[0])?, num(f[1])?));
        w.push(Complex64::new(num(f[2])?, num(f[3])?));
    }
    if g.len() != n {
        return Err(FitError::Parse(format!("header says {n} terms, found {}", g.len())));
    }
    Ok((ExponentialBcf::new(g, w)?, head))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcf::OhmicSpectralDensity;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        let e = ExponentialBcf::new(vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]).unwrap();
        assert_eq!(e.eval(0.0), c(1.0, 0.0));
        let e = ExponentialBcf::new(vec![c(1.0, 0.0)], vec![c(1.0, 1.0)]).unwrap();
        assert!((e.eval(PI) - c(-(-PI).exp(), 0.0)).norm() < 1e-15);
        assert!(ExponentialBcf::new(vec![c(1.0, 0.0)], vec![c(0.0, 1.0)]).is_err());
    }

    #[test]
    fn reconstruct_sd_single_term() {
        let e = ExponentialBcf::new(vec![c(3.0, 0.0)], vec![c(2.0, 0.0)]).unwrap();
        assert!((e.reconstruct_sd(0.0) - 1.5).abs() < 1e-15);
        assert!(e.reconstruct_sd(1e8).abs() < 1e-7);
    }

    #[test]
    fn recovers_single_exponential() {
        let (g0, w0) = (c(2.0, -1.0), c(3.0, 5.0));
        let target = SampledKernel::from_fn(2.0, 200, |t| g0 * (-w0 * t).exp());
        let mut opts = FitOptions::new(1, 2.0);
        opts.restarts = 8;
        let (e, rep) = fit_bcf(&target, &opts).unwrap();
        assert!((e.g()[0] - g0).norm() < 1e-8, "{:?}", e);
        assert!((e.w()[0] - w0).norm() < 1e-8, "{:?}", e);
        assert!(rep.max_rel_error < 1e-8);
    }

    #[test]
    fn error_metrics_are_scale_invariant() {
        let sd = OhmicSpectralDensity::new(0.5, 10.0, 1.0).unwrap();
        let target = SampledKernel::from_fn(2.0, 200, |t| sd.bcf_zero_temp(t));
        let e = ExponentialBcf::new(vec![c(20.0, -3.0), c(5.0, 1.0)], vec![c(15.0, 4.0), c(2.0, 0.5)])
            .unwrap();
        let a = fit_error(&e, &target, 10.0).unwrap();
        let scaled = SampledKernel {
            tau0: target.tau0,
            values: target.values.iter().map(|v| v * 7.5).collect(),
        };
        let b = fit_error(&e.scaled(7.5), &scaled, 10.0).unwrap();
        assert!((a.rel_p_error - b.rel_p_error).abs() < 1e-13 * a.rel_p_error);
        assert!((a.max_rel_error - b.max_rel_error).abs() < 1e-13 * a.max_rel_error);
        let exact = SampledKernel::from_fn(2.0, 200, |t| e.eval(t));
        let z = fit_error(&e, &exact, 2.0).unwrap();
        assert_eq!((z.rel_p_error, z.max_rel_error), (0.0, 0.0));
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let e = ExponentialBcf::new(
            vec![c(1.0 / 3.0, -2.0e-7), c(PI, 1e10)],
            vec![c(0.1, -7.25), c(1e-3, 1.0 / 7.0)],
        )
        .unwrap();
        let s = to_text(&e, 10.0, 15.0, 1.25e-3);
        let (back, h) = from_text(&s).unwrap();
        assert_eq!(back, e);
        assert_eq!(h.tau0, 15.0);
        assert!(s.starts_with("2 "));
    }

    #[test]
    fn stages_end_at_requested_order() {
        assert_eq!(norm_stages(2.0), vec![2.0]);
        assert_eq!(norm_stages(10.0), vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(norm_stages(5.0), vec![2.0, 4.0, 5.0]);
        assert_eq!(norm_stages(1.5), vec![1.5]);
    }
}
