//! Monte-Carlo ensembles of hierarchy trajectories.
//!
//! The reduced density matrix is the sample mean of `|psi^0><psi^0|` (linear
//! mode) or of the normalised projector (nonlinear mode). Trajectories run in
//! parallel batches and are reduced strictly in index order, so the result is
//! bit-identical for any thread count.

use crate::bcf::{BathKernel, OhmicSpectralDensity};
use crate::expfit::ExponentialBcf;
use crate::hierarchy::{HierarchyError, HierarchyIndexSet};
use crate::hops::{propagate_trajectory, Drive, HopsError, HopsMode, SystemModel, Tolerances};
use crate::stocproc::{derive_seed, plan_noise, sample_process, NoiseError, NoisePlan};
use crate::thermal::{plan_thermal_noise, ThermalConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

/// Largest tolerated fraction of failed trajectories.
pub const FAILURE_CAP: f64 = 0.01;

/// Trajectories integrated in parallel before an ordered reduction.
const BATCH: usize = 256;

/// Stream index of the `z` seeds; thermal seeds use `1 + seed_offset`.
const Z_STREAM: u64 = 0;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("{failed} of {total} trajectories failed (cap {cap_percent}%), first: {first}")]
    FailureCap {
        failed: usize,
        total: usize,
        cap_percent: f64,
        first: String,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Finite-temperature stochastic shift of the system Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalShift {
    pub sd: OhmicSpectralDensity,
    pub config: ThermalConfig,
}

/// Everything that determines the numbers of an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: SystemModel,
    pub fit: ExponentialBcf,
    /// Kernel of the driving noise `z`; `None` runs without noise.
    pub noise_kernel: Option<BathKernel>,
    pub mode: HopsMode,
    pub k_max: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub thermal: Option<ThermalShift>,
    pub noise_abstol: f64,
    pub t_grid: Vec<f64>,
    pub tol: Tolerances,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |m: String| Err(EnsembleError::InvalidConfig(m));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if self.t_grid.first() != Some(&0.0) {
            return bad("time grid must start at 0".into());
        }
        if self.t_grid.windows(2).any(|w| !(w[1] > w[0])) || self.t_grid.iter().any(|t| !t.is_finite()) {
            return bad("time grid must be finite and strictly increasing".into());
        }
        if !(self.noise_abstol > 0.0) {
            return bad(format!("noise_abstol must be positive, got {}", self.noise_abstol));
        }
        if !(self.tol.rtol > 0.0 && self.tol.atol > 0.0) {
            return bad("integrator tolerances must be positive".into());
        }
        if let Some(th) = &self.thermal {
            if !(th.config.beta > 0.0 && th.config.beta.is_finite()) {
                return bad(format!("thermal beta must be positive and finite, got {}", th.config.beta));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON serialisation.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn t_max(&self) -> f64 {
        *self.t_grid.last().unwrap_or(&0.0)
    }

    /// Seeds of the `z` and `y` processes of trajectory `i`.
    pub fn seeds(&self, i: usize) -> (u64, Option<u64>) {
        let z = derive_seed(self.master_seed, i as u64, Z_STREAM);
        let y = self
            .thermal
            .map(|th| derive_seed(self.master_seed, i as u64, 1 + th.config.seed_offset));
        (z, y)
    }
}

/// Execution settings that do not change the result.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Worker count; `None` uses the rayon default.
    pub threads: Option<usize>,
}

/// Running mean and co-moment matrix of a real vector (Welford/Chan).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major `sum (x - mean)(x - mean)^T`.
    pub comoment: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for r in 0..d {
            let after = x[r] - self.mean[r];
            for c in 0..d {
                self.comoment[r * d + c] += after * delta[c];
            }
        }
    }

    /// Combines two disjoint sample sets.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for r in 0..d {
            for c in 0..d {
                self.comoment[r * d + c] += other.comoment[r * d + c] + delta[r] * delta[c] * na * nb / n;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.count += other.count;
    }

    /// Covariance of the sample mean, `comoment / (n (n - 1))`.
    pub fn mean_covariance(&self) -> Vec<f64> {
        let n = self.count as f64;
        if self.count < 2 {
            return vec![0.0; self.comoment.len()];
        }
        self.comoment.iter().map(|c| c / (n * (n - 1.0))).collect()
    }
}

/// A trajectory that was excluded from the average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrajectory {
    pub index: usize,
    pub z_seed: u64,
    pub y_seed: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub t_grid: Vec<f64>,
    pub dim: usize,
    /// Row-major `rho(t)` per time.
    pub rho_series: Vec<Vec<Complex64>>,
    /// Standard error of the real part (`re`) and imaginary part (`im`) of
    /// each entry of `rho(t)`.
    pub stderr_series: Vec<Vec<Complex64>>,
    /// Trajectories that entered the average.
    pub n_samples: usize,
    /// Trajectory indices attempted, including failures.
    pub n_attempted: usize,
    pub failed: Vec<FailedTrajectory>,
    pub config_hash: String,
    pub wall_time: f64,
    /// Moments of the flattened `(Re, Im)` entries per time.
    pub moments: Vec<Moments>,
}

impl EnsembleResult {
    fn from_moments(
        cfg: &RunConfig,
        hash: &str,
        moments: &[Moments],
        attempted: usize,
        failed: &[FailedTrajectory],
        wall: f64,
    ) -> Self {
        let d = cfg.model.dim();
        let m = 2 * d * d;
        let mut rho_series = Vec::with_capacity(moments.len());
        let mut stderr_series = Vec::with_capacity(moments.len());
        for mo in moments {
            let cov = mo.mean_covariance();
            rho_series.push((0..d * d).map(|k| Complex64::new(mo.mean[2 * k], mo.mean[2 * k + 1])).collect());
            stderr_series.push(
                (0..d * d)
                    .map(|k| {
                        let (a, b) = (2 * k, 2 * k + 1);
                        Complex64::new(cov[a * m + a].max(0.0).sqrt(), cov[b * m + b].max(0.0).sqrt())
                    })
                    .collect(),
            );
        }
        Self {
            t_grid: cfg.t_grid.clone(),
            dim: d,
            rho_series,
            stderr_series,
            n_samples: moments.first().map_or(0, |m| m.count as usize),
            n_attempted: attempted,
            failed: failed.to_vec(),
            config_hash: hash.to_string(),
            wall_time: wall,
            moments: moments.to_vec(),
        }
    }

    /// `rho(t_i)` as a matrix.
    pub fn rho(&self, i: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.rho_series[i])
    }

    pub fn trace(&self, i: usize) -> Complex64 {
        (0..self.dim).map(|a| self.rho_series[i][a * self.dim + a]).sum()
    }
}

/// Shared, immutable inputs of all trajectories of one run.
struct Prepared {
    z_plan: Option<Arc<NoisePlan>>,
    y_plan: Option<Arc<NoisePlan>>,
    idx: HierarchyIndexSet,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, EnsembleError> {
    cfg.validate()?;
    let t_max = cfg.t_max();
    let z_plan = match &cfg.noise_kernel {
        Some(k) if t_max > 0.0 => Some(Arc::new(plan_noise(Arc::new(*k), t_max, cfg.noise_abstol)?)),
        _ => None,
    };
    let y_plan = match &cfg.thermal {
        Some(th) if t_max > 0.0 => plan_thermal_noise(&th.sd, &th.config, t_max)?,
        _ => None,
    };
    let idx = HierarchyIndexSet::build(cfg.fit.n_terms(), cfg.k_max)?;
    Ok(Prepared { z_plan, y_plan, idx })
}

/// Flattened `(Re, Im)` projector entries per output time of trajectory `i`.
fn trajectory(cfg: &RunConfig, prep: &Prepared, i: usize) -> Result<Vec<Vec<f64>>, FailedTrajectory> {
    let (z_seed, y_seed) = cfg.seeds(i);
    let z = prep.z_plan.as_ref().map(|p| sample_process(p, z_seed));
    let y = match (&prep.y_plan, y_seed) {
        (Some(p), Some(s)) => Some(sample_process(p, s)),
        _ => None,
    };
    let drive = Drive {
        z: z.as_ref(),
        y: y.as_ref(),
    };
    let fail = |e: HopsError| FailedTrajectory {
        index: i,
        z_seed,
        y_seed,
        message: e.to_string(),
    };
    let r = propagate_trajectory(&cfg.model, &cfg.fit, &prep.idx, drive, cfg.mode, &cfg.t_grid, cfg.tol)
        .map_err(fail)?;
    let states = match cfg.mode {
        HopsMode::Linear => r.psi0_series,
        HopsMode::Nonlinear => r.normalised(),
    };
    Ok(states
        .iter()
        .map(|psi| {
            let mut x = Vec::with_capacity(2 * psi.len() * psi.len());
            for a in psi {
                for b in psi {
                    let p = a * b.conj();
                    x.push(p.re);
                    x.push(p.im);
                }
            }
            x
        })
        .collect())
}

fn with_pool<R: Send>(exec: ExecOptions, f: impl FnOnce() -> R + Send) -> Result<R, EnsembleError> {
    match exec.threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| EnsembleError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `cfg.n_samples` trajectories and returns one result per checkpoint,
/// each averaging the first `n` trajectory indices; `cfg.n_samples` is
/// always included as the last checkpoint.
pub fn run_ensemble_nested(
    cfg: &RunConfig,
    checkpoints: &[usize],
    exec: ExecOptions,
) -> Result<Vec<EnsembleResult>, EnsembleError> {
    let start = Instant::now();
    let prep = prepare(cfg)?;
    let hash = cfg.hash();
    let mut marks: Vec<usize> = checkpoints
        .iter()
        .copied()
        .filter(|&n| n > 0 && n < cfg.n_samples)
        .collect();
    marks.push(cfg.n_samples);
    marks.sort_unstable();
    marks.dedup();

    let d = cfg.model.dim();
    let mut moments = vec![Moments::new(2 * d * d); cfg.t_grid.len()];
    let mut failed: Vec<FailedTrajectory> = Vec::new();
    let mut out = Vec::with_capacity(marks.len());
    let mut next = 0usize;
    with_pool(exec, || -> Result<(), EnsembleError> {
        for &mark in &marks {
            while next < mark {
                let end = (next + BATCH).min(mark);
                let batch: Vec<_> = (next..end)
                    .into_par_iter()
                    .map(|i| trajectory(cfg, &prep, i))
                    .collect();
                for r in batch {
                    match r {
                        Ok(series) => {
                            for (m, x) in moments.iter_mut().zip(&series) {
                                m.push(x);
                            }
                        }
                        Err(f) => {
                            log::warn!(
                                "trajectory {} failed (z seed {}, y seed {:?}): {}",
                                f.index,
                                f.z_seed,
                                f.y_seed,
                                f.message
                            );
                            failed.push(f);
                        }
                    }
                }
                next = end;
            }
            if failed.len() as f64 > FAILURE_CAP * mark as f64 {
                return Err(EnsembleError::FailureCap {
                    failed: failed.len(),
                    total: mark,
                    cap_percent: 100.0 * FAILURE_CAP,
                    first: failed[0].message.clone(),
                });
            }
            out.push(EnsembleResult::from_moments(
                cfg,
                &hash,
                &moments,
                mark,
                &failed,
                start.elapsed().as_secs_f64(),
            ));
        }
        Ok(())
    })??;
    Ok(out)
}

pub fn run_ensemble(cfg: &RunConfig, exec: ExecOptions) -> Result<EnsembleResult, EnsembleError> {
    Ok(run_ensemble_nested(cfg, &[], exec)?.pop().expect("final checkpoint"))
}

/// Real coefficients `a` with `Re tr(rho op) = a . x` for the flattened
/// `(Re, Im)` entries `x` of `rho`.
fn observable_weights(op: &DMatrix<Complex64>) -> Vec<f64> {
    let d = op.nrows();
    let mut a = Vec::with_capacity(2 * d * d);
    for r in 0..d {
        for c in 0..d {
            let o = op[(c, r)];
            a.push(o.re);
            a.push(-o.im);
        }
    }
    a
}

/// `tr(rho(t) op)` with its standard error at every output time. A
/// non-Hermitian `op` is accepted with a warning and the real part returned.
pub fn observable_series(res: &EnsembleResult, op: &DMatrix<Complex64>) -> Result<Vec<(f64, f64)>, EnsembleError> {
    let d = res.dim;
    if op.shape() != (d, d) {
        return Err(EnsembleError::InvalidConfig(format!(
            "observable shape {:?} does not match dimension {d}",
            op.shape()
        )));
    }
    if (op - op.adjoint()).norm() > 1e-12 * op.norm().max(1.0) {
        log::warn!("observable is not Hermitian; returning the real part of its expectation");
    }
    let a = observable_weights(op);
    let m = a.len();
    Ok(res
        .moments
        .iter()
        .map(|mo| {
            let value: f64 = a.iter().zip(&mo.mean).map(|(w, x)| w * x).sum();
            let cov = mo.mean_covariance();
            let mut var = 0.0;
            for r in 0..m {
                for c in 0..m {
                    var += a[r] * cov[r * m + c] * a[c];
                }
            }
            (value, var.max(0.0).sqrt())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub sample_counts: Vec<usize>,
    /// `max_t |<op>_n - <op>_{n_max}|` per sample count.
    pub max_deviation: Vec<f64>,
    /// `max_t stderr` per sample count.
    pub max_stderr: Vec<f64>,
    /// Least-squares slope of `log max_stderr` against `log n`; `-1/2` for
    /// pure sampling noise.
    pub stderr_slope: f64,
}

/// Noise-floor estimates from nested results with increasing sample counts.
pub fn convergence_report(
    nested: &[EnsembleResult],
    op: &DMatrix<Complex64>,
) -> Result<ConvergenceReport, EnsembleError> {
    let series: Vec<Vec<(f64, f64)>> = nested
        .iter()
        .map(|r| observable_series(r, op))
        .collect::<Result<_, _>>()?;
    let last = series
        .last()
        .ok_or_else(|| EnsembleError::InvalidConfig("no results to compare".into()))?;
    let max_deviation = series
        .iter()
        .map(|s| s.iter().zip(last).map(|(a, b)| (a.0 - b.0).abs()).fold(0.0, f64::max))
        .collect();
    let max_stderr: Vec<f64> = series
        .iter()
        .map(|s| s.iter().map(|v| v.1).fold(0.0, f64::max))
        .collect();
    let sample_counts: Vec<usize> = nested.iter().map(|r| r.n_samples).collect();
    let pts: Vec<(f64, f64)> = sample_counts
        .iter()
        .zip(&max_stderr)
        .filter(|(n, e)| **n > 1 && **e > 0.0)
        .map(|(n, e)| ((*n as f64).ln(), e.ln()))
        .collect();
    let stderr_slope = if pts.len() < 2 {
        f64::NAN
    } else {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    Ok(ConvergenceReport {
        sample_counts,
        max_deviation,
        max_stderr,
        stderr_slope,
    })
}

/// CSV with `t`, real and imaginary part of every entry of `rho`, then the
/// standard errors in the same order.
pub fn write_csv<W: Write>(res: &EnsembleResult, mut w: W) -> std::io::Result<()> {
    let d = res.dim;
    let mut head = vec!["t".to_string()];
    for prefix in ["", "stderr_"] {
        for r in 0..d {
            for c in 0..d {
                head.push(format!("{prefix}re_rho{r}{c}"));
                head.push(format!("{prefix}im_rho{r}{c}"));
            }
        }
    }
    writeln!(w, "{}", head.join(","))?;
    for (i, t) in res.t_grid.iter().enumerate() {
        let mut row = vec![format!("{t:.16e}")];
        for v in res.rho_series[i].iter().chain(&res.stderr_series[i]) {
            row.push(format!("{:.16e}", v.re));
            row.push(format!("{:.16e}", v.im));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub seed_rule: String,
    pub n_samples: usize,
    pub n_attempted: usize,
    pub failed: Vec<FailedTrajectory>,
    pub wall_time: f64,
}

impl Sidecar {
    pub fn new(cfg: &RunConfig, res: &EnsembleResult) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: res.config_hash.clone(),
            config: cfg.clone(),
            seed_rule: "z: derive_seed(master_seed, i, 0); y: derive_seed(master_seed, i, 1 + thermal.seed_offset)"
                .to_string(),
            n_samples: res.n_samples,
            n_attempted: res.n_attempted,
            failed: res.failed.clone(),
            wall_time: res.wall_time,
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn export(cfg: &RunConfig, res: &EnsembleResult, dir: &Path, stem: &str) -> Result<(), EnsembleError> {
    std::fs::create_dir_all(dir)?;
    let csv = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_csv(res, std::io::BufWriter::new(csv))?;
    let json = serde_json::to_string_pretty(&Sidecar::new(cfg, res)).expect("sidecar serialises");
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}
