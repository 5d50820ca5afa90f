//! Born–Markov master equations for the spin-boson model.
//!
//! `d rho = -i [H + H_lamb, rho] + sum_w r_w (2 L_w rho L_w+ - {L_w+ L_w, rho})`
//! with `L = sigma_z` split into eigen-transition components `L_0`,
//! `L_(2 lambda)` (lowering) and `L_(-2 lambda)`. The constant variant uses the
//! pseudo spectral density `r_w = J~(w)` and Lamb shift `S(w)`; the extended
//! variant replaces them by `Re` and `Im` of the finite-time
//! `Gamma(t, w) = int_0^t alpha(s) exp(i w s) ds`.

use crate::bcf::{OhmicSpectralDensity, SpectralValue};
use crate::expfit::ExponentialBcf;
use crate::ode::{integrate, OdeError, OdeOptions, OdeSystem};
use crate::quad::{integrate as quadrature, QuadOptions};
use crate::spline::UniformSpline;
use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat2 = Matrix2<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeError {
    #[error("bias and tunnelling both vanish; the eigen-decomposition is undefined")]
    Degenerate,
    #[error("pseudo-SD divergent at omega=0; use extended")]
    DivergentRate,
    #[error("invalid initial density matrix: {0}")]
    InvalidState(String),
    #[error("time grid must be non-decreasing and start at 0")]
    BadGrid,
    #[error(transparent)]
    Integration(#[from] OdeError),
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(c(0.0), c(1.0), c(1.0), c(0.0))
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(c(0.0), Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), c(0.0))
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(c(1.0), c(0.0), c(0.0), c(-1.0))
}

/// `|up><down|`.
pub fn sigma_plus() -> Mat2 {
    Mat2::new(c(0.0), c(1.0), c(0.0), c(0.0))
}

pub fn sigma_minus() -> Mat2 {
    Mat2::new(c(0.0), c(0.0), c(1.0), c(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinBosonParams {
    pub epsilon: f64,
    pub delta: f64,
    pub sd: OhmicSpectralDensity,
    /// Inverse temperature, `f64::INFINITY` at zero temperature.
    pub beta: f64,
}

impl SpinBosonParams {
    /// Half the level splitting, `sqrt(eps^2 + Delta^2)`.
    pub fn lambda(&self) -> f64 {
        self.epsilon.hypot(self.delta)
    }

    pub fn hamiltonian(&self) -> Mat2 {
        sigma_z() * c(self.epsilon) + sigma_x() * c(self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpDecomposition {
    /// Mixing angle with `tan(2 theta) = Delta / eps`.
    pub theta: f64,
    pub l_0: Mat2,
    /// Component lowering the energy by `2 lambda`.
    pub l_plus: Mat2,
    pub l_minus: Mat2,
}

pub fn decompose_l(p: &SpinBosonParams) -> Result<JumpDecomposition, MeError> {
    if p.lambda() == 0.0 {
        return Err(MeError::Degenerate);
    }
    let two_theta = p.delta.atan2(p.epsilon);
    let theta = 0.5 * two_theta;
    let (s2, c2) = two_theta.sin_cos();
    let (st, ct) = theta.sin_cos();
    let l_0 = (sigma_z() * c(c2) + sigma_x() * c(s2)) * c(c2);
    let l_plus = (sigma_z() * c(0.5 * s2) + sigma_plus() * c(st * st) - sigma_minus() * c(ct * ct)) * c(s2);
    Ok(JumpDecomposition {
        theta,
        l_0,
        l_minus: l_plus.adjoint(),
        l_plus,
    })
}

/// `Gamma(t, w)` of an exponential sum,
/// `sum_j G_j (1 - exp(-(W_j - i w) t)) / (W_j - i w)`; `t = inf` allowed.
pub fn gamma_expsum(e: &ExponentialBcf, t: f64, omega: f64) -> Complex64 {
    let iw = Complex64::new(0.0, omega);
    e.g()
        .iter()
        .zip(e.w())
        .map(|(g, w)| {
            let a = w - iw;
            if t.is_infinite() {
                g / a
            } else if a.norm() < 1e-14 {
                g * t * (1.0 - a * t / 2.0)
            } else {
                g * (1.0 - (-a * t).exp()) / a
            }
        })
        .sum()
}

/// Full BCF at `tau >= 0` with the thermal part from a tabulated spline.
struct ExactKernel {
    sd: OhmicSpectralDensity,
    thermal: Option<UniformSpline>,
}

impl ExactKernel {
    fn new(sd: OhmicSpectralDensity, beta: f64, t_max: f64) -> Self {
        let thermal = beta.is_finite().then(|| {
            let h = (2.0 / sd.thermal_omega_max(beta)).min(0.05);
            let n = (t_max / h).ceil() as usize + 2;
            let vals = (0..n)
                .map(|i| c(sd.thermal_contribution(beta, i as f64 * h).expect("beta checked")))
                .collect();
            UniformSpline::natural(0.0, h, vals)
        });
        Self { sd, thermal }
    }

    fn eval(&self, tau: f64) -> Complex64 {
        let th = self.thermal.as_ref().map_or(c(0.0), |s| s.eval(tau));
        self.sd.bcf_zero_temp(tau) + th
    }
}

/// `Gamma(t, w)` for a fixed set of frequencies, tabulated from the exact
/// kernel on `[0, t_max]` by cumulative Gauss–Kronrod quadrature.
pub struct GammaTable {
    pub omegas: Vec<f64>,
    tables: Vec<UniformSpline>,
}

impl GammaTable {
    pub fn new(sd: &OhmicSpectralDensity, beta: f64, omegas: &[f64], t_max: f64) -> Self {
        let kernel = ExactKernel::new(*sd, beta, t_max);
        let w_max = omegas.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
        let mut h = (0.25 / sd.omega_c).min(0.25 / w_max.max(1e-300)).min(0.01);
        if let Some(th) = &kernel.thermal {
            h = h.min(th.dt());
        }
        let n = ((t_max / h).ceil() as usize).max(1) + 1;
        let opts = QuadOptions {
            abs_tol: 1e-13 * sd.kernel_scale().max(f64::MIN_POSITIVE) * h,
            rel_tol: 1e-11,
            max_intervals: 200,
        };
        let tables = omegas
            .iter()
            .map(|&w| {
                let mut acc = c(0.0);
                let mut vals = Vec::with_capacity(n);
                vals.push(acc);
                for i in 1..n {
                    let a = (i - 1) as f64 * h;
                    let b = i as f64 * h;
                    acc += quadrature(|s: f64| kernel.eval(s) * Complex64::from_polar(1.0, w * s), a, b, &opts).value;
                    vals.push(acc);
                }
                UniformSpline::natural(0.0, h, vals)
            })
            .collect();
        Self {
            omegas: omegas.to_vec(),
            tables,
        }
    }

    pub fn eval(&self, which: usize, t: f64) -> Complex64 {
        self.tables[which].eval(t)
    }

    pub fn t_end(&self) -> f64 {
        self.tables[0].t_end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MeVariant {
    #[default]
    Constant,
    Extended,
}

impl std::str::FromStr for MeVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(Self::Constant),
            "extended" => Ok(Self::Extended),
            other => Err(format!("unknown variant {other:?} (expected constant or extended)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeOptions {
    pub variant: MeVariant,
    /// Drop the `w = 0` channel entirely.
    pub skip_omega0: bool,
    /// In the extended variant keep the `+-2 lambda` channels at their
    /// stationary rates.
    pub freeze_transitions: bool,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for MeOptions {
    fn default() -> Self {
        Self {
            variant: MeVariant::Constant,
            skip_omega0: false,
            freeze_transitions: false,
            rtol: 1e-9,
            atol: 1e-11,
        }
    }
}

enum Coefficient {
    /// Rate and Lamb-shift weight.
    Constant(f64, f64),
    /// Index into the `Gamma` table.
    Table(usize),
}

struct Channel {
    l: Mat2,
    ldl: Mat2,
    coef: Coefficient,
}

/// Channels actually present, with their coefficients.
pub struct MasterEquation {
    h: Mat2,
    channels: Vec<Channel>,
    table: Option<GammaTable>,
}

impl MasterEquation {
    pub fn new(p: &SpinBosonParams, opts: &MeOptions, t_max: f64) -> Result<Self, MeError> {
        let dec = decompose_l(p)?;
        let lam2 = 2.0 * p.lambda();
        let mut table_omegas = Vec::new();
        let mut channels = Vec::new();
        let l0_present = dec.l_0.norm() > 1e-15 && !opts.skip_omega0;
        for (omega, l) in [(0.0, dec.l_0), (lam2, dec.l_plus), (-lam2, dec.l_minus)] {
            if omega == 0.0 && !l0_present {
                continue;
            }
            if l.norm() <= 1e-15 {
                continue;
            }
            let timed = opts.variant == MeVariant::Extended && !(opts.freeze_transitions && omega != 0.0);
            let coef = if timed {
                table_omegas.push(omega);
                Coefficient::Table(table_omegas.len() - 1)
            } else {
                let rate = match p.sd.pseudo_sd(p.beta, omega) {
                    SpectralValue::Finite(v) => v,
                    SpectralValue::Divergent => return Err(MeError::DivergentRate),
                };
                // L_0+ L_0 is a multiple of the identity, so S(0) never enters
                let lamb = if omega == 0.0 { 0.0 } else { p.sd.lamb_shift(p.beta, omega) };
                Coefficient::Constant(rate, lamb)
            };
            channels.push(Channel {
                l,
                ldl: l.adjoint() * l,
                coef,
            });
        }
        let table = (!table_omegas.is_empty()).then(|| GammaTable::new(&p.sd, p.beta, &table_omegas, t_max));
        Ok(Self {
            h: p.hamiltonian(),
            channels,
            table,
        })
    }

    /// Decay rate and Lamb weight of each present channel at time `t`.
    pub fn coefficients(&self, t: f64) -> Vec<(f64, f64)> {
        self.channels
            .iter()
            .map(|ch| match ch.coef {
                Coefficient::Constant(r, s) => (r, s),
                Coefficient::Table(i) => {
                    let g = self.table.as_ref().expect("table built").eval(i, t);
                    (g.re, g.im)
                }
            })
            .collect()
    }

    pub fn derivative(&self, t: f64, rho: &Mat2) -> Mat2 {
        let mut h = self.h;
        let mut out = Mat2::zeros();
        for (ch, (rate, lamb)) in self.channels.iter().zip(self.coefficients(t)) {
            h += ch.ldl * c(lamb);
            let jump = ch.l * rho * ch.l.adjoint() * c(2.0) - (ch.ldl * rho + rho * ch.ldl);
            out += jump * c(rate);
        }
        let i = Complex64::new(0.0, 1.0);
        out - (h * rho - rho * h) * i
    }
}

impl OdeSystem for MasterEquation {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<(), String> {
        let rho = Mat2::new(y[0], y[1], y[2], y[3]);
        let d = self.derivative(t, &rho);
        dy.copy_from_slice(&[d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]]);
        Ok(())
    }
}

/// Density-matrix series on `t_grid` (which must start at 0).
pub fn propagate_me(
    p: &SpinBosonParams,
    rho0: &Mat2,
    opts: &MeOptions,
    t_grid: &[f64],
) -> Result<Vec<Mat2>, MeError> {
    if t_grid.first().is_some_and(|&t| t != 0.0) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(MeError::BadGrid);
    }
    let herm = (rho0 - rho0.adjoint()).norm();
    let tr = rho0.trace();
    if herm > 1e-12 || (tr - c(1.0)).norm() > 1e-12 {
        return Err(MeError::InvalidState(format!(
            "hermiticity defect {herm:e}, trace {tr}"
        )));
    }
    let eig = (rho0 + rho0.adjoint()).map(|z| z * 0.5);
    let det = (eig[(0, 0)] * eig[(1, 1)] - eig[(0, 1)] * eig[(1, 0)]).re;
    if det < -1e-12 || eig[(0, 0)].re < -1e-12 || eig[(1, 1)].re < -1e-12 {
        return Err(MeError::InvalidState("not positive semidefinite".into()));
    }
    let t_max = t_grid.last().copied().unwrap_or(0.0);
    let me = MasterEquation::new(p, opts, t_max.max(1e-9))?;
    let y0 = [rho0[(0, 0)], rho0[(0, 1)], rho0[(1, 0)], rho0[(1, 1)]];
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..Default::default()
    };
    let mut out = vec![Mat2::zeros(); t_grid.len()];
    integrate(&me, 0.0, &y0, t_grid, 4, &ode_opts, |i, _, y| {
        out[i] = Mat2::new(y[0], y[1], y[2], y[3]);
    })?;
    Ok(out)
}

/// `Tr(rho sigma_z)`.
pub fn sigma_z_expectation(rho: &Mat2) -> f64 {
    (rho[(0, 0)] - rho[(1, 1)]).re
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64, delta: f64, beta: f64) -> SpinBosonParams {
        SpinBosonParams {
            epsilon: eps,
            delta,
            sd: OhmicSpectralDensity::new(1.0, 100.0, 0.01).unwrap(),
            beta,
        }
    }

    fn up() -> Mat2 {
        Mat2::new(c(1.0), c(0.0), c(0.0), c(0.0))
    }

    #[test]
    fn decomposition_sums_to_sigma_z() {
        for &(e, d) in &[(0.0, 1.0), (1.0, 0.0), (3.0, 4.0), (-2.0, 0.5), (0.7, -1.3)] {
            let dec = decompose_l(&params(e, d, 1.0)).unwrap();
            assert!((dec.l_0 + dec.l_plus + dec.l_minus - sigma_z()).norm() < 1e-14);
            assert_eq!(dec.l_minus, dec.l_plus.adjoint());
        }
        let unbiased = decompose_l(&params(0.0, 1.0, 1.0)).unwrap();
        assert!(unbiased.l_0.norm() < 1e-15);
        assert!((unbiased.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        let pure = decompose_l(&params(1.0, 0.0, 1.0)).unwrap();
        assert!((pure.l_0 - sigma_z()).norm() < 1e-15);
        assert!(pure.l_plus.norm() < 1e-15);
        assert!(decompose_l(&params(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn plus_component_lowers_energy() {
        let p = params(0.6, 0.8, 1.0);
        let h = p.hamiltonian();
        let dec = decompose_l(&p).unwrap();
        // [H, L_w] = -w L_w
        let comm = h * dec.l_plus - dec.l_plus * h;
        assert!((comm + dec.l_plus * c(2.0 * p.lambda())).norm() < 1e-14);
    }

    #[test]
    fn gamma_single_term_limit() {
        let e = ExponentialBcf::new(vec![c(2.0)], vec![c(0.5)]).unwrap();
        assert!((gamma_expsum(&e, f64::INFINITY, 0.0) - c(4.0)).norm() < 1e-15);
        assert!((gamma_expsum(&e, 80.0, 0.0) - c(4.0)).norm() < 1e-15);
        let tiny = ExponentialBcf::new(vec![c(1.0)], vec![Complex64::new(1e-16, 2.0)]).unwrap();
        let g = gamma_expsum(&tiny, 3.0, 2.0);
        assert!((g - c(3.0)).norm() < 1e-12);
    }

    #[test]
    fn trace_and_hermiticity_preserved() {
        let times: Vec<f64> = (0..=60).map(|i| 0.25 * i as f64).collect();
        for variant in [MeVariant::Constant, MeVariant::Extended] {
            let o = MeOptions {
                variant,
                ..Default::default()
            };
            let r = propagate_me(&params(1.0, 1.0, 1.0), &up(), &o, &times).unwrap();
            for rho in &r {
                assert!((rho.trace() - c(1.0)).norm() < 1e-9);
                assert!((rho - rho.adjoint()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_temperature_relaxes_towards_ground_state() {
        let mut p = params(0.0, 1.0, f64::INFINITY);
        p.sd = OhmicSpectralDensity::new(1.0, 100.0, 0.05).unwrap();
        let r = propagate_me(&p, &up(), &MeOptions::default(), &[0.0, 60.0]).unwrap();
        let sx = (r[1] * sigma_x()).trace().re;
        assert!(sx < -0.5, "{sx}");
    }

    #[test]
    fn divergent_zero_frequency_channel_is_refused() {
        let p = SpinBosonParams {
            epsilon: 1.0,
            delta: 1.0,
            sd: OhmicSpectralDensity::new(0.8, 100.0, 0.01).unwrap(),
            beta: 1.0,
        };
        let times = [0.0, 1.0];
        assert_eq!(
            propagate_me(&p, &up(), &MeOptions::default(), &times).unwrap_err(),
            MeError::DivergentRate
        );
        let skip = MeOptions {
            skip_omega0: true,
            ..Default::default()
        };
        assert!(propagate_me(&p, &up(), &skip, &times).is_ok());
    }

    #[test]
    fn extended_rates_approach_pseudo_sd() {
        let p = params(1.0, 1.0, 1.0);
        let lam2 = 2.0 * p.lambda();
        let table = GammaTable::new(&p.sd, p.beta, &[lam2, 0.0], 30.0);
        let jt = p.sd.pseudo_sd(p.beta, lam2).finite().unwrap();
        assert!((table.eval(0, 30.0).re - jt).abs() < 0.02 * jt);
        let s = p.sd.lamb_shift(p.beta, lam2);
        assert!((table.eval(0, 30.0).im - s).abs() < 0.02 * s.abs().max(jt));
    }
}
