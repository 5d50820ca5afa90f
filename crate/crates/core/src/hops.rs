//! Hierarchy of pure states for a single noise realisation.
//!
//! The physical state `psi^0` couples to auxiliary states `psi^k`, one per
//! multi-index of the truncated hierarchy:
//!
//! `d psi^k = (z* L - k.W - i H) psi^k + L sum_j k_j G_j psi^(k-e_j) - L+ sum_j psi^(k+e_j)`.
//!
//! The nonlinear variant shifts the noise by memory variables `eta_j` and
//! replaces `L+` by `L+ - <L+>` in the raising term.

use crate::expfit::ExponentialBcf;
use crate::hierarchy::HierarchyIndexSet;
use crate::ode::{integrate, OdeError, OdeOptions, OdeStats, OdeSystem};
use crate::stocproc::StochasticProcess;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Squared norm of `psi^0` below which a nonlinear trajectory is abandoned.
pub const NORM_COLLAPSE: f64 = 1e-28;

const COLLAPSE_MESSAGE: &str = "trajectory norm collapse";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopsError {
    #[error("invalid system model: {0}")]
    InvalidModel(String),
    #[error("exponential sum has {bcf} terms but the hierarchy has {hierarchy}")]
    TermMismatch { bcf: usize, hierarchy: usize },
    #[error("output time {t} beyond noise horizon {horizon}")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("trajectory norm collapse at t = {t}")]
    NormCollapse { t: f64 },
    #[error(transparent)]
    Integration(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HopsMode {
    Linear,
    #[default]
    Nonlinear,
}

impl std::str::FromStr for HopsMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(Self::Linear),
            "nonlinear" => Ok(Self::Nonlinear),
            other => Err(format!("unknown mode {other:?} (expected linear or nonlinear)")),
        }
    }
}

impl std::fmt::Display for HopsMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Nonlinear => "nonlinear",
        })
    }
}

/// System Hamiltonian, coupling operator and initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub h_sys: DMatrix<Complex64>,
    pub coupling_l: DMatrix<Complex64>,
    pub psi0: DVector<Complex64>,
}

impl SystemModel {
    pub fn new(
        h_sys: DMatrix<Complex64>,
        coupling_l: DMatrix<Complex64>,
        psi0: DVector<Complex64>,
    ) -> Result<Self, HopsError> {
        let d = psi0.len();
        if d == 0 || h_sys.shape() != (d, d) || coupling_l.shape() != (d, d) {
            return Err(HopsError::InvalidModel(format!(
                "shapes H {:?}, L {:?}, psi0 {d}",
                h_sys.shape(),
                coupling_l.shape()
            )));
        }
        let herm = (&h_sys - h_sys.adjoint()).norm();
        if herm > 1e-12 {
            return Err(HopsError::InvalidModel(format!(
                "Hamiltonian not Hermitian (deviation {herm:e})"
            )));
        }
        if (psi0.norm() - 1.0).abs() > 1e-12 {
            return Err(HopsError::InvalidModel(format!(
                "initial state has norm {}",
                psi0.norm()
            )));
        }
        Ok(Self {
            h_sys,
            coupling_l,
            psi0,
        })
    }

    pub fn dim(&self) -> usize {
        self.psi0.len()
    }

    /// Same model with a different initial vector, unnormalised allowed.
    pub fn with_initial_unchecked(&self, psi0: DVector<Complex64>) -> Self {
        Self {
            psi0,
            ..self.clone()
        }
    }
}

/// Row-major copy of a square matrix.
fn flat(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            v.push(m[(r, c)]);
        }
    }
    v
}

#[inline]
fn matvec_acc(a: &[Complex64], x: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
    let d = x.len();
    for r in 0..d {
        let row = &a[r * d..(r + 1) * d];
        let mut s = Complex64::new(0.0, 0.0);
        for c in 0..d {
            s += row[c] * x[c];
        }
        out[r] += s * scale;
    }
}

/// Right-hand side of the hierarchy for fixed model, exponents and depth.
#[derive(Debug, Clone)]
pub struct HopsRhs<'a> {
    pub model: &'a SystemModel,
    pub bcf: &'a ExponentialBcf,
    pub idx: &'a HierarchyIndexSet,
    pub mode: HopsMode,
    d: usize,
    h: Vec<Complex64>,
    l: Vec<Complex64>,
    l_dag: Vec<Complex64>,
    /// `sum_j k_j W_j` per hierarchy member.
    kw: Vec<Complex64>,
    /// `k_j G_j` per member and term.
    kg: Vec<Complex64>,
}

impl<'a> HopsRhs<'a> {
    pub fn new(
        model: &'a SystemModel,
        bcf: &'a ExponentialBcf,
        idx: &'a HierarchyIndexSet,
        mode: HopsMode,
    ) -> Result<Self, HopsError> {
        let n = bcf.n_terms();
        if n != idx.n_terms() {
            return Err(HopsError::TermMismatch {
                bcf: n,
                hierarchy: idx.n_terms(),
            });
        }
        let mut kw = Vec::with_capacity(idx.len());
        let mut kg = Vec::with_capacity(idx.len() * n);
        for i in 0..idx.len() {
            let k = idx.index(i);
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                s += bcf.w()[j] * k[j] as f64;
                kg.push(bcf.g()[j] * k[j] as f64);
            }
            kw.push(s);
        }
        Ok(Self {
            model,
            bcf,
            idx,
            mode,
            d: model.dim(),
            h: flat(&model.h_sys),
            l: flat(&model.coupling_l),
            l_dag: flat(&model.coupling_l.adjoint()),
            kw,
            kg,
        })
    }

    /// Length of the state: all hierarchy blocks followed by the `eta_j`.
    pub fn state_len(&self) -> usize {
        self.d * self.idx.len() + self.bcf.n_terms()
    }

    /// Initial state: `psi0` in the physical block, zeros elsewhere.
    pub fn initial_state(&self) -> Vec<Complex64> {
        let mut s = vec![Complex64::new(0.0, 0.0); self.state_len()];
        s[..self.d].copy_from_slice(self.model.psi0.as_slice());
        s
    }

    /// `<psi^0|L+|psi^0> / <psi^0|psi^0>`.
    pub fn expectation_l_dag(&self, psi0: &[Complex64]) -> Result<Complex64, HopsError> {
        let d = self.d;
        let nrm: f64 = psi0.iter().map(|c| c.norm_sqr()).sum();
        if nrm < NORM_COLLAPSE {
            return Err(HopsError::NormCollapse { t: f64::NAN });
        }
        let mut s = Complex64::new(0.0, 0.0);
        for r in 0..d {
            let mut row = Complex64::new(0.0, 0.0);
            for c in 0..d {
                row += self.l_dag[r * d + c] * psi0[c];
            }
            s += psi0[r].conj() * row;
        }
        Ok(s / nrm)
    }

    /// Derivative of `state` for the conjugate noise value `z_star` and the
    /// thermal shift `y` (zero without a thermal process).
    pub fn eval(
        &self,
        state: &[Complex64],
        z_star: Complex64,
        y: Complex64,
        out: &mut [Complex64],
    ) -> Result<(), HopsError> {
        let d = self.d;
        let n = self.bcf.n_terms();
        let nb = self.idx.len();
        let psi = &state[..d * nb];
        let eta = &state[d * nb..];
        let zero = Complex64::new(0.0, 0.0);
        let minus_i = Complex64::new(0.0, -1.0);

        let (z_eff, shift) = match self.mode {
            HopsMode::Linear => (z_star, zero),
            HopsMode::Nonlinear => {
                let e = self.expectation_l_dag(&psi[..d])?;
                (z_star + eta.iter().sum::<Complex64>(), e)
            }
        };
        // M0 = z_eff L - i (H + L+ y + L y*)
        let mut m0 = vec![zero; d * d];
        for a in 0..d * d {
            let h = self.h[a] + self.l_dag[a] * y + self.l[a] * y.conj();
            m0[a] = self.l[a] * z_eff + minus_i * h;
        }
        let mut l_eff = self.l_dag.clone();
        if shift != zero {
            for r in 0..d {
                l_eff[r * d + r] -= shift;
            }
        }

        let mut low = vec![zero; d];
        let mut up = vec![zero; d];
        for i in 0..nb {
            let block = &psi[i * d..(i + 1) * d];
            let o = &mut out[i * d..(i + 1) * d];
            let kw = self.kw[i];
            for r in 0..d {
                o[r] = -kw * block[r];
            }
            matvec_acc(&m0, block, Complex64::new(1.0, 0.0), o);
            low.fill(zero);
            up.fill(zero);
            let lrow = self.idx.lower_row(i);
            let rrow = self.idx.raise_row(i);
            let kg = &self.kg[i * n..(i + 1) * n];
            let mut any_low = false;
            let mut any_up = false;
            for j in 0..n {
                let p = lrow[j];
                if p != crate::hierarchy::ABSENT {
                    let src = &psi[p as usize * d..(p as usize + 1) * d];
                    for r in 0..d {
                        low[r] += kg[j] * src[r];
                    }
                    any_low = true;
                }
                let q = rrow[j];
                if q != crate::hierarchy::ABSENT {
                    let src = &psi[q as usize * d..(q as usize + 1) * d];
                    for r in 0..d {
                        up[r] += src[r];
                    }
                    any_up = true;
                }
            }
            if any_low {
                matvec_acc(&self.l, &low, Complex64::new(1.0, 0.0), o);
            }
            if any_up {
                matvec_acc(&l_eff, &up, Complex64::new(-1.0, 0.0), o);
            }
        }
        let deta = &mut out[d * nb..];
        match self.mode {
            HopsMode::Linear => deta.fill(zero),
            HopsMode::Nonlinear => {
                for j in 0..n {
                    deta[j] = -self.bcf.w()[j].conj() * eta[j] + self.bcf.g()[j].conj() * shift;
                }
            }
        }
        Ok(())
    }
}

/// The hierarchy driven by concrete noise realisations.
struct Driven<'a> {
    rhs: HopsRhs<'a>,
    z: Option<&'a StochasticProcess>,
    y: Option<&'a StochasticProcess>,
}

impl OdeSystem for Driven<'_> {
    fn dim(&self) -> usize {
        self.rhs.state_len()
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<(), String> {
        let z_star = self
            .z
            .map_or(Complex64::new(0.0, 0.0), |p| p.eval_unchecked(t).conj());
        let shift = self.y.map_or(Complex64::new(0.0, 0.0), |p| p.eval_unchecked(t));
        self.rhs.eval(y, z_star, shift, dy).map_err(|e| match e {
            HopsError::NormCollapse { .. } => COLLAPSE_MESSAGE.to_string(),
            other => other.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
        }
    }
}

/// Noise inputs of one trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct Drive<'a> {
    /// Zero-temperature process `z`; `None` for a noiseless run.
    pub z: Option<&'a StochasticProcess>,
    /// Thermal shift process `y`; `None` at zero temperature.
    pub y: Option<&'a StochasticProcess>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    /// `psi^0(t)` per output time.
    pub psi0_series: Vec<Vec<Complex64>>,
    pub norm_series: Vec<f64>,
    pub mode: HopsMode,
    pub stats: OdeStats,
}

impl TrajectoryResult {
    /// `psi^0 / |psi^0|` per output time.
    pub fn normalised(&self) -> Vec<Vec<Complex64>> {
        self.psi0_series
            .iter()
            .zip(&self.norm_series)
            .map(|(p, &n)| p.iter().map(|c| c / n).collect())
            .collect()
    }
}

/// Integrates one trajectory from the product initial state.
pub fn propagate_trajectory(
    model: &SystemModel,
    bcf: &ExponentialBcf,
    idx: &HierarchyIndexSet,
    drive: Drive<'_>,
    mode: HopsMode,
    out_grid: &[f64],
    tol: Tolerances,
) -> Result<TrajectoryResult, HopsError> {
    for p in [drive.z, drive.y].into_iter().flatten() {
        if let Some(&t) = out_grid.last() {
            if t > p.t_end() {
                return Err(HopsError::OutOfHorizon {
                    t,
                    horizon: p.t_end(),
                });
            }
        }
    }
    let rhs = HopsRhs::new(model, bcf, idx, mode)?;
    let d = model.dim();
    let y0 = rhs.initial_state();
    let sys = Driven {
        rhs,
        z: drive.z,
        y: drive.y,
    };
    let opts = OdeOptions {
        rtol: tol.rtol,
        atol: tol.atol,
        ..Default::default()
    };
    let mut psi0_series = vec![Vec::new(); out_grid.len()];
    let mut norm_series = vec![0.0; out_grid.len()];
    let (_, stats) = integrate(&sys, 0.0, &y0, out_grid, d, &opts, |i, _, psi| {
        psi0_series[i] = psi.to_vec();
        norm_series[i] = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    })
    .map_err(|e| match e {
        OdeError::Rhs { t, message } if message == COLLAPSE_MESSAGE => HopsError::NormCollapse { t },
        other => HopsError::Integration(other),
    })?;
    if mode == HopsMode::Nonlinear {
        if let Some(i) = norm_series.iter().position(|&n| n * n < NORM_COLLAPSE) {
            return Err(HopsError::NormCollapse { t: out_grid[i] });
        }
    }
    Ok(TrajectoryResult {
        times: out_grid.to_vec(),
        psi0_series,
        norm_series,
        mode,
        stats,
    })
}

/// `max_t |psi~_k(t) - psi~_ref(t)|` for each depth in `k_list`, where
/// `psi~` is the normalised physical state and the noise is held fixed.
#[allow(clippy::too_many_arguments)]
pub fn depth_convergence(
    model: &SystemModel,
    bcf: &ExponentialBcf,
    drive: Drive<'_>,
    mode: HopsMode,
    k_list: &[usize],
    k_ref: usize,
    out_grid: &[f64],
    tol: Tolerances,
) -> Result<Vec<(usize, f64)>, HopsError> {
    let run = |k: usize| -> Result<Vec<Vec<Complex64>>, HopsError> {
        let idx = HierarchyIndexSet::build(bcf.n_terms(), k)
            .map_err(|e| HopsError::InvalidModel(e.to_string()))?;
        Ok(propagate_trajectory(model, bcf, &idx, drive, mode, out_grid, tol)?.normalised())
    };
    let reference = run(k_ref)?;
    let mut out = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let dist = if k == k_ref {
            0.0
        } else {
            let series = run(k)?;
            series
                .iter()
                .zip(&reference)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| (x - y).norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max)
        };
        out.push((k, dist));
    }
    Ok(out)
}

/// Smallest depth whose distance is below `threshold`.
pub fn minimal_depth(table: &[(usize, f64)], threshold: f64) -> Option<usize> {
    table
        .iter()
        .filter(|(_, d)| *d < threshold)
        .map(|(k, _)| *k)
        .min()
}
