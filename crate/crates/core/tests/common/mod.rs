//! Shared helpers for the integration tests: cached kernel fits, analytic
//! oracles and an independent stochastic-Hamiltonian reference.
#![allow(dead_code)]

use hopskit::bcf::{BathKernel, KernelKind, OhmicSpectralDensity};
use hopskit::expfit::{fit_bcf, from_text, to_text, ExponentialBcf, FitOptions, FitReport, SampledKernel};
use hopskit::hops::SystemModel;
use hopskit::ode::{integrate, OdeOptions, OdeSystem};
use hopskit::stocproc::{derive_seed, plan_noise, sample_process, StochasticProcess};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use std::path::PathBuf;
use std::sync::Arc;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn sigma_z() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Two-level model with arbitrary initial state.
pub fn spin_model(eps: f64, delta: f64, psi0: [Complex64; 2]) -> SystemModel {
    let h = DMatrix::from_row_slice(2, 2, &[c(eps, 0.0), c(delta, 0.0), c(delta, 0.0), c(-eps, 0.0)]);
    SystemModel::new(h, sigma_z(), DVector::from_vec(psi0.to_vec())).unwrap()
}

fn cache_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("fits");
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// Best-of-`restarts` fit of `kernel` on `[0, tau0]` with `p = 10`, cached on
/// disk under `key` (the fit is deterministic, so the cache only saves time).
pub fn cached_fit(key: &str, kernel: BathKernel, n_terms: usize, tau0: f64, restarts: usize) -> (ExponentialBcf, f64) {
    let path = cache_dir().join(format!("{key}-N{n_terms}-tau{tau0}-r{restarts}.fit"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok((e, h)) = from_text(&text) {
            return (e, h.max_rel_error);
        }
    }
    let target = SampledKernel::from_fn(tau0, SampledKernel::DEFAULT_POINTS, |t| kernel.eval(t));
    let opts = FitOptions {
        restarts,
        seed: 1,
        rate_scale: Some(kernel.sd.omega_c),
        ..FitOptions::new(n_terms, 10.0)
    };
    let (e, rep): (ExponentialBcf, FitReport) = fit_bcf(&target, &opts).unwrap();
    std::fs::write(&path, to_text(&e, rep.p, rep.tau0, rep.max_rel_error)).unwrap();
    (e, rep.max_rel_error)
}

/// Fit of the zero-temperature kernel with `s = 0.5`, `omega_c = 10`,
/// `alpha = 1`; the kernel is linear in `alpha`, so scale `G` afterwards.
pub fn unit_subohmic_fit(n_terms: usize, tau0: f64) -> (ExponentialBcf, f64) {
    let sd = OhmicSpectralDensity::new(0.5, 10.0, 1.0).unwrap();
    cached_fit(
        "subohmic-unit",
        BathKernel::new(sd, KernelKind::ZeroTemperature),
        n_terms,
        tau0,
        64,
    )
}

/// Pure-dephasing decay exponent
/// `Phi(t) = (4/pi) int J(w) (1 - cos w t) / w^2 dw` in closed form,
/// `2 alpha wc^(1-s) Gamma(s-1) [wc^(s-1) - Re (1/wc - i t)^(1-s)]`.
pub fn dephasing_exponent(s: f64, wc: f64, alpha: f64, t: f64) -> f64 {
    let g = statrs::function::gamma::gamma(s) / (s - 1.0);
    let z = c(1.0 / wc, -t).powf(1.0 - s);
    2.0 * alpha * wc.powf(1.0 - s) * g * (wc.powf(s - 1.0) - z.re)
}

/// The same exponent by direct adaptive quadrature, as a cross-check.
pub fn dephasing_exponent_quad(s: f64, wc: f64, alpha: f64, t: f64) -> f64 {
    let j = |w: f64| 0.5 * std::f64::consts::PI * alpha * wc.powf(1.0 - s) * w.powf(s) * (-w / wc).exp();
    let f = |w: f64| {
        if w == 0.0 {
            0.0
        } else {
            // 1 - cos(wt) = 2 sin^2(wt/2), stable for small w t
            let h = (0.5 * w * t).sin();
            j(w) * 2.0 * h * h / (w * w)
        }
    };
    // composite Gauss-Legendre on a geometric-then-uniform partition
    let nodes = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189),
        (-0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.0, 0.568_888_888_888_889),
        (0.538_469_310_105_683, 0.478_628_670_499_366),
        (0.906_179_845_938_664, 0.236_926_885_056_189),
    ];
    let mut edges = vec![0.0];
    let mut x = 1e-12;
    while x < 1e-2 {
        edges.push(x);
        x *= 1.5;
    }
    let top = 60.0 * wc;
    let step = (0.05 / t.max(1e-3)).min(0.05 * wc);
    let mut x = 1e-2;
    while x < top {
        edges.push(x);
        x += step.max(1e-2);
    }
    edges.push(top);
    let mut sum = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (xi, wi) in nodes {
            sum += wi * h * f(m + h * xi);
        }
    }
    4.0 / std::f64::consts::PI * sum
}

/// Schroedinger equation of a two-level system driven by a real force,
/// `i d psi = (H + f(t) L) psi`.
struct Driven<'a> {
    model: &'a SystemModel,
    force: &'a StochasticProcess,
}

impl OdeSystem for Driven<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<(), String> {
        let f = std::f64::consts::SQRT_2 * self.force.eval_unchecked(t).re;
        let d = self.model.dim();
        for r in 0..d {
            let mut s = c(0.0, 0.0);
            for k in 0..d {
                s += (self.model.h_sys[(r, k)] + self.model.coupling_l[(r, k)] * f) * y[k];
            }
            dy[r] = c(0.0, -1.0) * s;
        }
        Ok(())
    }
}

/// `<sigma_z>(t)` of the stochastic Hamiltonian method: a classical Gaussian
/// force with autocorrelation `(1/pi) int J coth(beta w/2) cos(w tau) dw`,
/// built from the real part of a complex process with that autocorrelation.
pub fn stochastic_hamiltonian_sz(
    model: &SystemModel,
    sd: OhmicSpectralDensity,
    beta: f64,
    samples: usize,
    seed: u64,
    t_grid: &[f64],
) -> Vec<f64> {
    let kernel = BathKernel::new(sd, KernelKind::RealThermal { beta });
    let t_max = *t_grid.last().unwrap();
    let abstol = 1e-3 * kernel.eval(0.0).norm();
    let plan = Arc::new(plan_noise(Arc::new(kernel), t_max, abstol).unwrap());
    let opts = OdeOptions {
        rtol: 1e-7,
        atol: 1e-9,
        ..Default::default()
    };
    let sums: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let force = sample_process(&plan, derive_seed(seed, i as u64, 7));
            let sys = Driven { model, force: &force };
            let mut sz = vec![0.0; t_grid.len()];
            integrate(&sys, 0.0, model.psi0.as_slice(), t_grid, 2, &opts, |k, _, y| {
                sz[k] = y[0].norm_sqr() - y[1].norm_sqr();
            })
            .unwrap();
            sz
        })
        .collect();
    let mut mean = vec![0.0; t_grid.len()];
    for s in &sums {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / samples as f64;
        }
    }
    mean
}

pub fn uniform_grid(t_max: f64, dt: f64) -> Vec<f64> {
    let n = (t_max / dt).round() as usize;
    (0..=n).map(|i| i as f64 * dt).collect()
}

/// Envelope decay measure: mean of `|x(t)|` over the last third of the run.
pub fn late_amplitude(t: &[f64], x: &[f64]) -> f64 {
    let t_end = *t.last().unwrap();
    let tail: Vec<f64> = t
        .iter()
        .zip(x)
        .filter(|(ti, _)| **ti >= 2.0 * t_end / 3.0)
        .map(|(_, v)| v.abs())
        .collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}
