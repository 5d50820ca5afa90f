//! Spectral densities and bath correlation functions.
//!
//! All kernels derive from the Ohmic family with exponential cutoff,
//! `J(w) = (pi/2) alpha wc^(1-s) w^s exp(-w/wc)`, with the convention
//! `alpha(tau) = (1/pi) int dw J~(w) exp(-i w tau)`.

use crate::quad::{integrate_spectral, QuadOptions};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BcfError {
    #[error("invalid spectral density parameters: {0}")]
    InvalidParameters(String),
    #[error("frequency must be non-negative, got {0}")]
    NegativeFrequency(f64),
    #[error("inverse temperature must be positive, got {0}")]
    InvalidBeta(f64),
}

/// Value of a spectrum that may diverge at zero frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralValue {
    Finite(f64),
    Divergent,
}

impl SpectralValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            SpectralValue::Finite(v) => Some(v),
            SpectralValue::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, SpectralValue::Divergent)
    }
}

/// Mean Bose occupation `1/(exp(x) - 1)`.
pub fn bose(x: f64) -> f64 {
    1.0 / x.exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhmicSpectralDensity {
    pub s: f64,
    pub omega_c: f64,
    pub alpha: f64,
}

impl OhmicSpectralDensity {
    pub fn new(s: f64, omega_c: f64, alpha: f64) -> Result<Self, BcfError> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(BcfError::InvalidParameters(format!("s = {s} must be > 0")));
        }
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(BcfError::InvalidParameters(format!(
                "omega_c = {omega_c} must be > 0"
            )));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(BcfError::InvalidParameters(format!(
                "alpha = {alpha} must be >= 0"
            )));
        }
        Ok(Self { s, omega_c, alpha })
    }

    /// `J(omega)` for `omega >= 0`.
    pub fn sd_value(&self, omega: f64) -> Result<f64, BcfError> {
        if omega < 0.0 {
            return Err(BcfError::NegativeFrequency(omega));
        }
        Ok(self.density(omega))
    }

    /// Unchecked `J(omega)`; zero for `omega <= 0`.
    #[inline]
    pub(crate) fn density(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        0.5 * PI
            * self.alpha
            * self.omega_c.powf(1.0 - self.s)
            * omega.powf(self.s)
            * (-omega / self.omega_c).exp()
    }

    /// Frequency beyond which `J` is negligible (tail below ~1e-12 of peak).
    pub fn omega_max(&self) -> f64 {
        40.0 * self.omega_c * self.s.max(1.0)
    }

    /// Upper integration limit for integrands carrying a Bose factor.
    pub fn thermal_omega_max(&self, beta: f64) -> f64 {
        (40.0 * self.s.max(1.0) / (beta + 1.0 / self.omega_c)).min(self.omega_max())
    }

    /// Overall magnitude of the zero-temperature kernel, `|alpha(0)|`.
    pub fn kernel_scale(&self) -> f64 {
        self.alpha * self.omega_c * self.omega_c * statrs::function::gamma::gamma(self.s + 1.0)
            / 2.0
    }

    fn quad_opts(&self) -> QuadOptions {
        QuadOptions {
            abs_tol: 1e-14 * self.kernel_scale().max(f64::MIN_POSITIVE),
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }

    /// Closed-form zero-temperature BCF,
    /// `alpha wc^2 Gamma(s+1) / (2 (1 + i wc tau)^(s+1))`.
    pub fn bcf_zero_temp(&self, tau: f64) -> Complex64 {
        let base = Complex64::new(1.0, self.omega_c * tau);
        Complex64::from(self.kernel_scale()) * base.powf(-(self.s + 1.0))
    }

    /// Zero-temperature BCF from direct quadrature of the Fourier integral.
    /// Slow; used to cross-check the closed form.
    pub fn bcf_zero_temp_quad(&self, tau: f64) -> Complex64 {
        integrate_spectral(
            |w: f64| Complex64::from_polar(self.density(w) / PI, -w * tau),
            self.omega_max(),
            self.s,
            tau.abs(),
            &self.quad_opts(),
        )
    }

    fn check_beta(beta: f64) -> Result<(), BcfError> {
        if beta > 0.0 && !beta.is_nan() {
            Ok(())
        } else {
            Err(BcfError::InvalidBeta(beta))
        }
    }

    /// Full thermal BCF `(1/pi) int J(w) [coth(beta w/2) cos(w tau) - i sin(w tau)] dw`,
    /// evaluated by quadrature of that single integrand.
    pub fn bcf_full_temp(&self, beta: f64, tau: f64) -> Result<Complex64, BcfError> {
        Self::check_beta(beta)?;
        if beta.is_infinite() {
            return Ok(self.bcf_zero_temp(tau));
        }
        let v = integrate_spectral(
            |w: f64| {
                let j = self.density(w) / PI;
                let coth = 1.0 + 2.0 * bose(beta * w);
                let (sn, cs) = (w * tau).sin_cos();
                Complex64::new(j * coth * cs, -j * sn)
            },
            self.omega_max(),
            self.s - 1.0,
            tau.abs(),
            &self.quad_opts(),
        );
        Ok(v)
    }

    /// Temperature-dependent part of the BCF,
    /// `(1/pi) int 2 nbar(beta w) J(w) cos(w tau) dw`; this is also the
    /// autocorrelation of the stochastic force `f = 2 Re y`.
    pub fn thermal_contribution(&self, beta: f64, tau: f64) -> Result<f64, BcfError> {
        Self::check_beta(beta)?;
        if beta.is_infinite() {
            return Ok(0.0);
        }
        Ok(integrate_spectral(
            |w: f64| 2.0 * bose(beta * w) * self.density(w) * (w * tau).cos() / PI,
            self.thermal_omega_max(beta),
            self.s - 1.0,
            tau.abs(),
            &self.quad_opts(),
        ))
    }

    /// Autocorrelation of the thermal shift process,
    /// `<y(t) y*(s)> = (1/pi) int nbar(beta w) J(w) exp(-i w (t-s)) dw`.
    pub fn thermal_kernel(&self, beta: f64, tau: f64) -> Result<Complex64, BcfError> {
        Self::check_beta(beta)?;
        if beta.is_infinite() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(integrate_spectral(
            |w: f64| Complex64::from_polar(bose(beta * w) * self.density(w) / PI, -w * tau),
            self.thermal_omega_max(beta),
            self.s - 1.0,
            tau.abs(),
            &self.quad_opts(),
        ))
    }

    /// Real classical high-temperature kernel
    /// `(1/pi) int J(w) coth(beta w/2) cos(w tau) dw`.
    pub fn real_kernel(&self, beta: f64, tau: f64) -> Result<f64, BcfError> {
        Self::check_beta(beta)?;
        Ok(self.bcf_full_temp(beta, tau)?.re)
    }

    fn zero_frequency_limit(&self, beta: f64) -> SpectralValue {
        if self.s > 1.0 || self.alpha == 0.0 {
            SpectralValue::Finite(0.0)
        } else if self.s == 1.0 {
            SpectralValue::Finite(0.5 * PI * self.alpha / beta)
        } else {
            SpectralValue::Divergent
        }
    }

    /// `nbar(beta w) J(w)` for `w >= 0` (zero for negative frequencies).
    pub fn thermal_spectrum(&self, beta: f64, omega: f64) -> SpectralValue {
        if beta.is_infinite() || omega < 0.0 {
            return SpectralValue::Finite(0.0);
        }
        if omega == 0.0 {
            return self.zero_frequency_limit(beta);
        }
        SpectralValue::Finite(bose(beta * omega) * self.density(omega))
    }

    /// Pseudo spectral density `J(w)/(1 - exp(-beta w))` with the odd
    /// extension `J(-w) = -J(w)`; `beta = inf` gives the zero-temperature
    /// one-sided `J`.
    pub fn pseudo_sd(&self, beta: f64, omega: f64) -> SpectralValue {
        if beta.is_infinite() {
            return SpectralValue::Finite(self.density(omega));
        }
        if omega > 0.0 {
            SpectralValue::Finite(self.density(omega) * (1.0 + bose(beta * omega)))
        } else if omega < 0.0 {
            SpectralValue::Finite(self.density(-omega) * bose(-beta * omega))
        } else {
            self.zero_frequency_limit(beta)
        }
    }

    /// Principal-value Lamb-shift function `S(w) = Im Gamma(inf, w)`,
    /// `S(w) = (1/pi) P int J~(x)/(w - x) dx`, for `w != 0`.
    pub fn lamb_shift(&self, beta: f64, omega: f64) -> f64 {
        assert!(omega != 0.0, "lamb shift is evaluated at non-zero frequency");
        let opts = QuadOptions {
            abs_tol: 1e-12 * self.kernel_scale().max(f64::MIN_POSITIVE) / self.omega_c,
            rel_tol: 1e-10,
            max_intervals: 4000,
        };
        let up = |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            if beta.is_infinite() {
                self.density(x)
            } else {
                self.density(x) * (1.0 + bose(beta * x))
            }
        };
        let down = |x: f64| {
            if beta.is_infinite() || x <= 0.0 {
                0.0
            } else {
                self.density(x) * bose(beta * x)
            }
        };
        let upper = self.omega_max();
        // S = (1/pi)[ P int_0^inf up(x)/(w-x) dx + P int_0^inf down(x)/(w+x) dx ]
        let pv = |g: &dyn Fn(f64) -> f64, pole: f64, sign: f64, exponent: f64| -> f64 {
            // int_0^inf g(x) / (sign * (pole - x)) dx with pole possibly > 0
            if pole <= 0.0 {
                return integrate_spectral(
                    |x: f64| g(x) / (sign * (pole - x)),
                    upper,
                    exponent,
                    0.0,
                    &opts,
                );
            }
            let gp = g(pole);
            let near = integrate_spectral(
                |x: f64| {
                    let d = pole - x;
                    if d.abs() < 1e-14 * pole {
                        0.0
                    } else {
                        (g(x) - gp) / (sign * d)
                    }
                },
                2.0 * pole,
                exponent.min(0.0),
                0.0,
                &opts,
            );
            let far = crate::quad::integrate(
                |x: f64| g(x) / (sign * (pole - x)),
                2.0 * pole,
                upper.max(4.0 * pole),
                &opts,
            )
            .value;
            near + far
        };
        let e = if beta.is_infinite() { self.s } else { self.s - 1.0 };
        let a = pv(&up, omega, 1.0, e);
        let b = pv(&down, -omega, -1.0, e);
        (a + b) / PI
    }
}

/// Which correlation function a bath is represented by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// Zero-temperature BCF, spectrum `J(w)` on `w >= 0`.
    ZeroTemperature,
    /// Full thermal BCF, two-sided pseudo spectral density.
    Thermal { beta: f64 },
    /// Real high-temperature kernel, symmetric spectrum `J(|w|) coth(beta |w|/2)/2`.
    RealThermal { beta: f64 },
    /// Thermal shift process `y(t)`, spectrum `nbar(beta w) J(w)` on `w >= 0`.
    ThermalShift { beta: f64 },
}

/// A spectral density paired with the kernel it generates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathKernel {
    pub sd: OhmicSpectralDensity,
    pub kind: KernelKind,
}

impl BathKernel {
    pub fn new(sd: OhmicSpectralDensity, kind: KernelKind) -> Self {
        Self { sd, kind }
    }

    /// Correlation function value at `tau`.
    pub fn eval(&self, tau: f64) -> Complex64 {
        match self.kind {
            KernelKind::ZeroTemperature => self.sd.bcf_zero_temp(tau),
            KernelKind::Thermal { beta } => self
                .sd
                .bcf_full_temp(beta, tau)
                .expect("beta validated at construction"),
            KernelKind::RealThermal { beta } => Complex64::from(
                self.sd
                    .real_kernel(beta, tau)
                    .expect("beta validated at construction"),
            ),
            KernelKind::ThermalShift { beta } => self
                .sd
                .thermal_kernel(beta, tau)
                .expect("beta validated at construction"),
        }
    }

    /// Spectrum `S(w) >= 0` with `kernel(tau) = (1/pi) int S(w) exp(-i w tau) dw`.
    /// Zero frequency returns the finite limit or `+inf` for integrable
    /// divergences.
    pub fn spectrum(&self, omega: f64) -> f64 {
        let v = match self.kind {
            KernelKind::ZeroTemperature => SpectralValue::Finite(self.sd.density(omega)),
            KernelKind::Thermal { beta } => self.sd.pseudo_sd(beta, omega),
            KernelKind::RealThermal { beta } => {
                let w = omega.abs();
                if w == 0.0 {
                    match self.sd.zero_frequency_limit(beta) {
                        SpectralValue::Finite(x) => SpectralValue::Finite(x),
                        d => d,
                    }
                } else {
                    SpectralValue::Finite(
                        0.5 * self.sd.density(w) * (1.0 + 2.0 * bose(beta * w)),
                    )
                }
            }
            KernelKind::ThermalShift { beta } => self.sd.thermal_spectrum(beta, omega),
        };
        v.finite().unwrap_or(f64::INFINITY)
    }

    /// Whether the spectrum has support on negative frequencies.
    pub fn two_sided(&self) -> bool {
        matches!(
            self.kind,
            KernelKind::Thermal { .. } | KernelKind::RealThermal { .. }
        )
    }

    /// Power-law exponent of the spectrum at zero frequency.
    pub fn low_frequency_exponent(&self) -> f64 {
        match self.kind {
            KernelKind::ZeroTemperature => self.sd.s,
            _ => self.sd.s - 1.0,
        }
    }

    pub fn omega_max(&self) -> f64 {
        match self.kind {
            KernelKind::ThermalShift { beta } => self.sd.thermal_omega_max(beta),
            _ => self.sd.omega_max(),
        }
    }
}
