//! Finite temperature through a stochastic Hermitian shift of the system
//! Hamiltonian, `H(t) = H + L+ y(t) + L y*(t)`, on top of a
//! zero-temperature hierarchy. The shift process has autocorrelation
//! `<y(t) y*(s)> = (1/pi) int nbar(beta w) J(w) exp(-i w (t-s)) dw`.

use crate::bcf::{BathKernel, BcfError, KernelKind, OhmicSpectralDensity};
use crate::hops::SystemModel;
use crate::stocproc::{plan_noise, sample_process, NoiseError, NoisePlan, StochasticProcess};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    /// Inverse temperature; `f64::INFINITY` disables the thermal shift.
    pub beta: f64,
    pub noise_abstol: f64,
    /// Stream offset separating `y` seeds from `z` seeds.
    pub seed_offset: u64,
}

impl ThermalConfig {
    pub fn is_enabled(&self) -> bool {
        self.beta.is_finite()
    }
}

/// Noise plan for `y`, or `None` at zero temperature.
pub fn plan_thermal_noise(
    sd: &OhmicSpectralDensity,
    cfg: &ThermalConfig,
    t_max: f64,
) -> Result<Option<Arc<NoisePlan>>, NoiseError> {
    if !cfg.is_enabled() {
        return Ok(None);
    }
    if !(cfg.beta > 0.0) {
        return Err(NoiseError::InvalidTolerance(cfg.beta));
    }
    let kernel = BathKernel::new(*sd, KernelKind::ThermalShift { beta: cfg.beta });
    Ok(Some(Arc::new(plan_noise(Arc::new(kernel), t_max, cfg.noise_abstol)?)))
}

/// One realisation of `y`, or `None` at zero temperature.
pub fn make_thermal_process(
    sd: &OhmicSpectralDensity,
    cfg: &ThermalConfig,
    t_max: f64,
    seed: u64,
) -> Result<Option<StochasticProcess>, NoiseError> {
    Ok(plan_thermal_noise(sd, cfg, t_max)?.map(|p| sample_process(&p, seed)))
}

/// `H + L+ y + L y*`.
pub fn shifted_hamiltonian(model: &SystemModel, y: Complex64) -> DMatrix<Complex64> {
    let l = &model.coupling_l;
    &model.h_sys + l.adjoint() * y + l * y.conj()
}

/// `<f(t) f(s)>` of the force `f = 2 Re y`,
/// `(2/pi) int nbar(beta w) J(w) cos(w tau) dw`.
pub fn thermal_force_autocorrelation(
    sd: &OhmicSpectralDensity,
    beta: f64,
    tau: f64,
) -> Result<f64, BcfError> {
    sd.thermal_contribution(beta, tau)
}
