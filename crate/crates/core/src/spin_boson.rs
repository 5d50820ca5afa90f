//! Spin-boson model `H = eps sigma_z + Delta sigma_x`, `L = sigma_z`, and the
//! named parameter sets of the benchmark runs. Energies are in units of
//! `Delta`, times in units of `1/Delta`.

use crate::bcf::{BathKernel, BcfError, KernelKind, OhmicSpectralDensity};
use crate::ensemble::{RunConfig, ThermalShift};
use crate::expfit::{fit_bcf, ExponentialBcf, FitError, FitOptions, FitReport, SampledKernel};
use crate::hops::{HopsError, HopsMode, SystemModel, Tolerances};
use crate::master_eq::SpinBosonParams;
use crate::thermal::ThermalConfig;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Two-level model with `psi0 = |up>` (the `+1` eigenstate of `sigma_z`).
pub fn make_spin_boson(epsilon: f64, delta: f64) -> Result<SystemModel, HopsError> {
    if epsilon == 0.0 && delta == 0.0 {
        return Err(HopsError::InvalidModel("epsilon and delta both zero".into()));
    }
    let h = DMatrix::from_row_slice(2, 2, &[c(epsilon), c(delta), c(delta), c(-epsilon)]);
    let l = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
    SystemModel::new(h, l, DVector::from_vec(vec![c(1.0), c(0.0)]))
}

/// How a finite bath temperature enters the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThermalMethod {
    /// Zero-temperature kernel plus a stochastic Hermitian shift of `H`.
    StochasticShift,
    /// Fit of the full complex finite-temperature kernel.
    FullKernel,
    /// Fit of the real part of the finite-temperature kernel only.
    RealKernel,
}

/// Exponential-sum fit settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub n_terms: usize,
    /// Fit interval `[0, tau0]`.
    pub tau0: f64,
    pub p: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Required maximal relative error on the fit interval.
    pub max_rel_error: f64,
}

impl FitSpec {
    pub fn options(&self, rate_scale: f64) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            seed: self.seed,
            rate_scale: Some(rate_scale),
            ..FitOptions::new(self.n_terms, self.p)
        }
    }
}

/// Complete recipe of one benchmark run; combined with a fit it yields the
/// [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedConfig {
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
    pub s: f64,
    pub omega_c: f64,
    pub alpha: f64,
    /// Bath temperature; `0` is the zero-temperature bath.
    pub temperature: f64,
    pub thermal_method: ThermalMethod,
    pub fit: FitSpec,
    pub mode: HopsMode,
    pub k_max: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub t_max: f64,
    pub dt: f64,
    /// Noise tolerance relative to `|alpha(0)|` of the sampled kernel.
    pub noise_rel_tol: f64,
    pub tol: Tolerances,
    /// Origin of the comparison data, if any.
    pub reference: Option<String>,
}

impl NamedConfig {
    pub fn sd(&self) -> Result<OhmicSpectralDensity, BcfError> {
        OhmicSpectralDensity::new(self.s, self.omega_c, self.alpha)
    }

    pub fn beta(&self) -> f64 {
        if self.temperature > 0.0 {
            1.0 / self.temperature
        } else {
            f64::INFINITY
        }
    }

    fn finite_temperature(&self) -> bool {
        self.temperature > 0.0
    }

    /// Kernel approximated by the exponential sum.
    pub fn fit_kernel(&self) -> Result<BathKernel, BcfError> {
        let sd = self.sd()?;
        let kind = match (self.finite_temperature(), self.thermal_method) {
            (false, _) | (true, ThermalMethod::StochasticShift) => KernelKind::ZeroTemperature,
            (true, ThermalMethod::FullKernel) => KernelKind::Thermal { beta: self.beta() },
            (true, ThermalMethod::RealKernel) => KernelKind::RealThermal { beta: self.beta() },
        };
        Ok(BathKernel::new(sd, kind))
    }

    pub fn fit_target(&self) -> Result<SampledKernel, BcfError> {
        let k = self.fit_kernel()?;
        Ok(SampledKernel::from_fn(self.fit.tau0, SampledKernel::DEFAULT_POINTS, |t| k.eval(t)))
    }

    /// Fits the kernel with the configured settings.
    pub fn fit_kernel_terms(&self) -> Result<(ExponentialBcf, FitReport), FitError> {
        let target = self.fit_target().map_err(|e| FitError::InvalidSetup(e.to_string()))?;
        fit_bcf(&target, &self.fit.options(self.omega_c))
    }

    pub fn thermal_shift(&self) -> Result<Option<ThermalShift>, BcfError> {
        if !self.finite_temperature() || self.thermal_method != ThermalMethod::StochasticShift {
            return Ok(None);
        }
        let sd = self.sd()?;
        let beta = self.beta();
        let scale = sd.thermal_contribution(beta, 0.0)?.abs();
        Ok(Some(ThermalShift {
            sd,
            config: ThermalConfig {
                beta,
                noise_abstol: self.noise_rel_tol * scale,
                seed_offset: 0,
            },
        }))
    }

    pub fn t_grid(&self) -> Vec<f64> {
        let n = (self.t_max / self.dt).round() as usize;
        (0..=n).map(|i| i as f64 * self.dt).collect()
    }

    pub fn me_params(&self) -> Result<SpinBosonParams, BcfError> {
        Ok(SpinBosonParams {
            epsilon: self.epsilon,
            delta: self.delta,
            sd: self.sd()?,
            beta: self.beta(),
        })
    }

    /// Run configuration using the exponential sum `fit`.
    pub fn run_config(&self, fit: ExponentialBcf) -> Result<RunConfig, String> {
        let kernel = self.fit_kernel().map_err(|e| e.to_string())?;
        let thermal = self.thermal_shift().map_err(|e| e.to_string())?;
        let model = make_spin_boson(self.epsilon, self.delta).map_err(|e| e.to_string())?;
        Ok(RunConfig {
            model,
            fit,
            noise_kernel: (self.alpha > 0.0).then_some(kernel),
            mode: self.mode,
            k_max: self.k_max,
            n_samples: self.n_samples,
            master_seed: self.master_seed,
            thermal,
            noise_abstol: self.noise_rel_tol * kernel.eval(0.0).norm().max(f64::MIN_POSITIVE),
            t_grid: self.t_grid(),
            tol: self.tol,
        })
    }
}

#[derive(Clone, Copy)]
struct Base {
    s: f64,
    omega_c: f64,
    alpha: f64,
    n_terms: usize,
    tau0: f64,
    max_rel: f64,
    k_max: usize,
    n_samples: usize,
    t_max: f64,
}

fn named(label: String, b: Base, epsilon: f64, temperature: f64, method: ThermalMethod) -> NamedConfig {
    NamedConfig {
        label,
        epsilon,
        delta: 1.0,
        s: b.s,
        omega_c: b.omega_c,
        alpha: b.alpha,
        temperature,
        thermal_method: method,
        fit: FitSpec {
            n_terms: b.n_terms,
            tau0: b.tau0,
            p: 10.0,
            restarts: 64,
            seed: 1,
            max_rel_error: b.max_rel,
        },
        mode: HopsMode::Nonlinear,
        k_max: b.k_max,
        n_samples: b.n_samples,
        master_seed: 1,
        t_max: b.t_max,
        dt: 0.1,
        noise_rel_tol: 1e-3,
        tol: Tolerances::default(),
        reference: None,
    }
}

fn tag(x: f64) -> String {
    let s = format!("{x}");
    s.replace('.', "")
}

/// All benchmark configurations.
pub fn named_configs() -> Vec<NamedConfig> {
    use ThermalMethod::*;
    let mut out = Vec::new();

    // weak coupling, Ohmic
    let ohmic = Base {
        s: 1.0,
        omega_c: 100.0,
        alpha: 0.01,
        n_terms: 6,
        tau0: 0.5,
        max_rel: 4e-3,
        k_max: 3,
        n_samples: 10_000,
        t_max: 15.0,
    };
    for t in [0.0, 1.0, 10.0] {
        let mut n = named(format!("fig3-T{}", tag(t)), ohmic, 0.0, t, StochasticShift);
        n.reference = Some("master equation, constant rates".into());
        out.push(n);
    }
    for eps in [1.0, 2.0] {
        let mut n = named(format!("fig3-eps{}-T1", tag(eps)), ohmic, eps, 1.0, StochasticShift);
        n.reference = Some("master equation, constant rates".into());
        out.push(n);
    }

    // weak coupling, sub-Ohmic
    let sub = Base {
        s: 0.8,
        omega_c: 100.0,
        alpha: 0.01 * 100f64.powf(0.8 - 1.0),
        max_rel: 7e-3,
        ..ohmic
    };
    for eps in [0.0, 1.0, 2.0] {
        for t in [0.0, 1.0] {
            let mut n = named(format!("fig4-eps{}-T{}", tag(eps), tag(t)), sub, eps, t, StochasticShift);
            n.reference = Some("master equation, extended and constant without w=0".into());
            out.push(n);
        }
    }

    // high temperature
    let left = Base {
        s: 0.5,
        omega_c: 0.531,
        alpha: 0.266,
        n_terms: 5,
        tau0: 15.0,
        max_rel: 2e-2,
        k_max: 6,
        n_samples: 10_000,
        t_max: 15.0,
    };
    let right = Base {
        omega_c: 1.33,
        alpha: 0.106,
        ..left
    };
    let biased = Base {
        omega_c: 1.65,
        alpha: 0.0106,
        k_max: 4,
        ..left
    };
    for (name, b, eps, t) in [
        ("fig5-left", left, 0.0, 2.09),
        ("fig5-right", right, 0.0, 5.21),
        ("fig6", biased, 2.5, 10.4),
    ] {
        let mut n = named(name.to_string(), b, eps, t, StochasticShift);
        n.reference = Some("stochastic Hamiltonian, recomputed".into());
        out.push(n);
        out.push(named(format!("{name}-real"), b, eps, t, RealKernel));
    }

    // strong coupling, sub-Ohmic
    let strong = Base {
        s: 0.5,
        omega_c: 10.0,
        alpha: 0.2,
        n_terms: 5,
        tau0: 15.0,
        max_rel: 2e-2,
        k_max: 9,
        n_samples: 100_000,
        t_max: 40.0,
    };
    out.push(named("fig7".into(), strong, 0.0, 0.0, StochasticShift));
    let mut lin = named("fig7-linear".into(), strong, 0.0, 0.0, StochasticShift);
    lin.mode = HopsMode::Linear;
    out.push(lin);
    for (tau0, n_terms) in [(2.0, 5), (15.0, 5), (40.0, 8)] {
        let b = Base { tau0, n_terms, ..strong };
        out.push(named(format!("fig8-tau{}", tag(tau0)), b, 0.0, 0.0, StochasticShift));
    }
    for (alpha, k_max) in [(0.1, 5), (0.15, 6), (0.2, 9), (0.25, 12)] {
        for t in [0.0, 0.2, 1.0] {
            let b = Base { alpha, k_max, ..strong };
            let mut n = named(
                format!("fig10-alpha{:03}-T{}", (alpha * 100.0).round() as u32, tag(t)),
                b,
                0.0,
                t,
                StochasticShift,
            );
            if t == 0.0 {
                n.reference = Some("ML-MCTDH (not bundled)".into());
            }
            out.push(n);
        }
    }

    let therm = Base {
        alpha: 0.15,
        k_max: 4,
        ..strong
    };
    out.push(named("fig2-shift".into(), therm, 0.0, 1.0, StochasticShift));
    out.push(named("fig2-full".into(), Base { k_max: 8, ..therm }, 0.0, 1.0, FullKernel));
    out
}

pub fn find_named(label: &str) -> Option<NamedConfig> {
    named_configs().into_iter().find(|n| n.label == label)
}
