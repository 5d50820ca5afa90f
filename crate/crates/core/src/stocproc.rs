//! Stationary complex Gaussian processes from a prescribed spectrum.
//!
//! A process with autocorrelation `alpha(tau) = (1/pi) int S(w) exp(-i w tau) dw`
//! is synthesised as `z(t) = sum_k sqrt(a_k S(w_k) / pi) Y_k exp(-i w_k t)`
//! with midpoint-rule nodes `w_k`, evaluated on the time grid `t_l = l dt`
//! by one FFT (`n dw dt = 2 pi`) and interpolated with a cubic spline. The
//! grid spacings are refined until both the Riemann-sum reconstruction of
//! `alpha` and its spline interpolation are within an absolute tolerance.

use crate::bcf::BathKernel;
use crate::quad::{integrate_power_endpoint, integrate_spectral, QuadOptions};
use crate::spline::UniformSpline;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{Read, Write};
use std::sync::Arc;
use thiserror::Error;

/// Default cap on the FFT length.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 24;

/// Ghost nodes appended on each side of the grid before fitting the spline,
/// taken from the antiperiodic continuation of the FFT output.
const GHOST_NODES: usize = 12;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("time horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error(
        "noise tolerance {abstol:e} unreachable within {budget} nodes \
         (riemann error {riemann_error:e}, interpolation error {interp_error:e})"
    )]
    BudgetExceeded {
        abstol: f64,
        budget: usize,
        riemann_error: f64,
        interp_error: f64,
    },
    #[error("time {t} outside process domain [0, {t_end}]")]
    OutOfDomain { t: f64, t_end: f64 },
    #[error("expected {expected} gaussian draws, got {got}")]
    DrawCount { expected: usize, got: usize },
    #[error("spectrum vanishes identically")]
    ZeroSpectrum,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A non-negative spectral function `S(w)`.
pub trait Spectrum: Send + Sync + std::fmt::Debug {
    /// `S(w)`; may be `+inf` at `w = 0` for integrable divergences.
    fn density(&self, omega: f64) -> f64;

    /// Whether `S` has support on `w < 0`.
    fn two_sided(&self) -> bool;

    /// Exponent `p > -1` with `S(w) ~ |w|^p` as `w -> 0`.
    fn low_frequency_exponent(&self) -> f64;

    /// Frequency beyond which the spectrum is certainly negligible.
    fn frequency_bound(&self) -> f64;

    /// Reference autocorrelation; defaults to adaptive quadrature.
    fn reference_kernel(&self, tau: f64) -> Complex64 {
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-11,
            max_intervals: 2000,
        };
        let p = self.low_frequency_exponent();
        let upper = self.frequency_bound();
        let pos = integrate_spectral(
            |w: f64| Complex64::from_polar(self.density(w) / PI, -w * tau),
            upper,
            p,
            tau.abs(),
            &opts,
        );
        if self.two_sided() {
            let neg = integrate_spectral(
                |w: f64| Complex64::from_polar(self.density(-w) / PI, w * tau),
                upper,
                p,
                tau.abs(),
                &opts,
            );
            pos + neg
        } else {
            pos
        }
    }
}

impl Spectrum for BathKernel {
    fn density(&self, omega: f64) -> f64 {
        self.spectrum(omega)
    }

    fn two_sided(&self) -> bool {
        BathKernel::two_sided(self)
    }

    fn low_frequency_exponent(&self) -> f64 {
        BathKernel::low_frequency_exponent(self)
    }

    fn frequency_bound(&self) -> f64 {
        self.omega_max()
    }

    fn reference_kernel(&self, tau: f64) -> Complex64 {
        use crate::bcf::KernelKind;
        // zero-temperature closed form plus a quadrature over the (narrow)
        // thermal band; equal to the single-integrand quadrature by the
        // thermal split identity
        match self.kind {
            KernelKind::ZeroTemperature | KernelKind::ThermalShift { .. } => self.eval(tau),
            KernelKind::Thermal { beta } => {
                self.sd.bcf_zero_temp(tau)
                    + self.sd.thermal_contribution(beta, tau).expect("valid beta")
            }
            KernelKind::RealThermal { beta } => Complex64::from(
                self.sd.bcf_zero_temp(tau).re
                    + self.sd.thermal_contribution(beta, tau).expect("valid beta"),
            ),
        }
    }
}

/// Frequency where the spectrum has dropped below `1e-12` of its peak.
fn cutoff(spec: &dyn Spectrum, sign: f64) -> f64 {
    let hi = spec.frequency_bound();
    let lo = hi * 1e-7;
    let steps: usize = 600;
    let ratio = (hi / lo).powf(1.0 / steps as f64);
    let grid: Vec<f64> = (0..=steps).map(|i| lo * ratio.powi(i as i32)).collect();
    let vals: Vec<f64> = grid
        .iter()
        .map(|&w| spec.density(sign * w))
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    let peak = vals.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    for i in (0..=steps).rev() {
        if vals[i] >= 1e-12 * peak {
            return (grid[i] * ratio).min(hi);
        }
    }
    hi
}

/// Discretisation of a spectrum for FFT-based sampling.
#[derive(Debug, Clone)]
pub struct NoisePlan {
    /// Leftmost node frequency.
    pub omega_0: f64,
    pub d_omega: f64,
    /// FFT length; nodes beyond `weights.len()` carry zero weight.
    pub n: usize,
    pub d_t: f64,
    pub t_max: f64,
    pub abstol: f64,
    /// Integration weights `a_k S(w_k)` of the nonzero nodes.
    pub weights: Vec<f64>,
    /// Achieved max deviation of the Riemann sum from the reference kernel.
    pub riemann_error: f64,
    /// Achieved max spline interpolation error of the autocorrelation.
    pub interp_error: f64,
    pub spectrum: Arc<dyn Spectrum>,
    fft: FftHandle,
}

#[derive(Clone)]
struct FftHandle(Arc<dyn Fft<f64>>);

impl std::fmt::Debug for FftHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft(len={})", self.0.len())
    }
}

impl NoisePlan {
    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn node_frequency(&self, k: usize) -> f64 {
        self.omega_0 + k as f64 * self.d_omega
    }

    /// Time span covered by one FFT period, `n dt = 2 pi / dw`.
    pub fn horizon(&self) -> f64 {
        self.n as f64 * self.d_t
    }

    /// Riemann-sum autocorrelation `sum_k a_k S(w_k)/pi exp(-i w_k tau)`.
    pub fn reconstructed_kernel(&self, tau: f64) -> Complex64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, &w)| Complex64::from_polar(w / PI, -self.node_frequency(k) * tau))
            .sum()
    }

    /// Riemann-sum autocorrelation on the FFT grid `l dt`, `l < n`.
    pub fn reconstructed_kernel_grid(&self) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); self.n];
        for (b, &w) in buf.iter_mut().zip(&self.weights) {
            *b = Complex64::from(w / PI);
        }
        self.fft.0.process(&mut buf);
        for (l, b) in buf.iter_mut().enumerate() {
            *b *= Complex64::from_polar(1.0, -self.omega_0 * l as f64 * self.d_t);
        }
        buf
    }
}

/// Weights and first node of the midpoint rule on cells aligned with zero.
fn midpoint_weights(spec: &dyn Spectrum, w_neg: f64, w_pos: f64, dw: f64) -> (f64, Vec<f64>) {
    let m_neg = (w_neg / dw).ceil() as usize;
    let m_pos = (w_pos / dw).ceil().max(1.0) as usize;
    let omega_0 = -(m_neg as f64) * dw + 0.5 * dw;
    let p = spec.low_frequency_exponent();
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 500,
    };
    let mut weights = Vec::with_capacity(m_neg + m_pos);
    for k in 0..(m_neg + m_pos) {
        let w = omega_0 + k as f64 * dw;
        let v = if k + 1 == m_neg {
            // cell [-dw, 0]
            integrate_power_endpoint(|x: f64| spec.density(-x), dw, p, &opts).value
        } else if k == m_neg {
            // cell [0, dw]
            integrate_power_endpoint(|x: f64| spec.density(x), dw, p, &opts).value
        } else {
            dw * spec.density(w)
        };
        weights.push(v.max(0.0));
    }
    (omega_0, weights)
}

fn fft_len(dw: f64, dt_target: f64) -> usize {
    let raw = (2.0 * PI / (dw * dt_target)).ceil() as usize;
    raw.next_power_of_two()
}

fn spline_with_ghosts(values: &[Complex64], dt: f64) -> UniformSpline {
    // the FFT grid is antiperiodic: z[l + n] = -z[l] (cell-centred nodes)
    let n = values.len();
    let g = GHOST_NODES.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * g + 1);
    for l in (n - g)..n {
        ext.push(-values[l]);
    }
    ext.extend_from_slice(values);
    for l in 0..=g {
        ext.push(-values[l]);
    }
    UniformSpline::natural(-(g as f64) * dt, dt, ext)
}

/// Plans a noise discretisation meeting `abstol` on `[0, t_max]`.
pub fn plan_noise(
    spectrum: Arc<dyn Spectrum>,
    t_max: f64,
    abstol: f64,
) -> Result<NoisePlan, NoiseError> {
    plan_noise_with_budget(spectrum, t_max, abstol, DEFAULT_NODE_BUDGET)
}

pub fn plan_noise_with_budget(
    spectrum: Arc<dyn Spectrum>,
    t_max: f64,
    abstol: f64,
    budget: usize,
) -> Result<NoisePlan, NoiseError> {
    if !(abstol > 0.0) {
        return Err(NoiseError::InvalidTolerance(abstol));
    }
    if !(t_max > 0.0) {
        return Err(NoiseError::InvalidHorizon(t_max));
    }
    let spec: &dyn Spectrum = spectrum.as_ref();
    let w_pos = cutoff(spec, 1.0);
    let w_neg = if spec.two_sided() { cutoff(spec, -1.0) } else { 0.0 };
    let w_abs = w_pos.max(w_neg);
    if w_abs == 0.0 {
        return Err(NoiseError::ZeroSpectrum);
    }
    let mut dw = ((w_pos + w_neg) / 64.0).min(PI / t_max);
    let mut dt_target = PI / w_abs;

    // reference kernel on the half-step grid over [0, t_max]; cached between
    // refinements keyed by the half step
    let mut ref_cache: Option<(f64, Vec<Complex64>)> = None;
    let mut planner = FftPlanner::<f64>::new();
    loop {
        let n = fft_len(dw, dt_target);
        let dt = 2.0 * PI / (n as f64 * dw);
        let (omega_0, weights) = midpoint_weights(spec, w_neg, w_pos, dw);
        if n > budget || weights.len() > n {
            return Err(NoiseError::BudgetExceeded {
                abstol,
                budget,
                riemann_error: f64::NAN,
                interp_error: f64::NAN,
            });
        }

        // Riemann sum on the half-step grid via an FFT of length 2n
        let fft2 = planner.plan_fft_forward(2 * n);
        let mut half: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); 2 * n];
        for (b, &w) in half.iter_mut().zip(&weights) {
            *b = Complex64::from(w / PI);
        }
        fft2.process(&mut half);
        let h = 0.5 * dt;
        for (j, b) in half.iter_mut().enumerate() {
            *b *= Complex64::from_polar(1.0, -omega_0 * j as f64 * h);
        }
        let n_check = ((t_max / h).ceil() as usize + 1).min(2 * n);
        let reference = match &ref_cache {
            Some((hc, r)) if *hc == h && r.len() == n_check => r.clone(),
            _ => {
                let r: Vec<Complex64> = (0..n_check)
                    .map(|j| spec.reference_kernel(j as f64 * h))
                    .collect();
                ref_cache = Some((h, r.clone()));
                r
            }
        };
        let riemann_error = half
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);

        // spline through the full-step samples, checked at the half steps
        let grid: Vec<Complex64> = half.iter().step_by(2).cloned().collect();
        let spline = spline_with_ghosts(&grid, dt);
        let interp_error = (0..n_check)
            .filter(|j| j % 2 == 1)
            .map(|j| (spline.eval(j as f64 * h) - half[j]).norm())
            .fold(0.0, f64::max);

        let riemann_ok = riemann_error < abstol;
        let interp_ok = interp_error < abstol;
        if riemann_ok && interp_ok {
            let fft = FftHandle(planner.plan_fft_forward(n));
            return Ok(NoisePlan {
                omega_0,
                d_omega: dw,
                n,
                d_t: dt,
                t_max,
                abstol,
                weights,
                riemann_error,
                interp_error,
                spectrum,
                fft,
            });
        }
        let next_n = n * 2;
        if next_n > budget {
            return Err(NoiseError::BudgetExceeded {
                abstol,
                budget,
                riemann_error,
                interp_error,
            });
        }
        if !riemann_ok {
            dw *= 0.5;
        }
        if !interp_ok {
            dt_target = 0.5 * dt;
        } else {
            dt_target = dt;
        }
    }
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `stream` of trajectory `index` under `master`.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    let a = mix64(master.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix64(a ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    mix64(b ^ stream.wrapping_mul(0x8cb9_2ba7_2f3d_8dd7).wrapping_add(1))
}

/// One realisation of a planned process.
#[derive(Debug, Clone)]
pub struct StochasticProcess {
    pub plan: Arc<NoisePlan>,
    pub seed: u64,
    spline: UniformSpline,
    n: usize,
}

/// Standard complex Gaussian draws `(x + i y)/sqrt(2)`.
pub fn complex_gaussians(seed: u64, count: usize) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(x, y) * FRAC_1_SQRT_2
        })
        .collect()
}

/// Draws a realisation; deterministic in `(plan, seed)`.
pub fn sample_process(plan: &Arc<NoisePlan>, seed: u64) -> StochasticProcess {
    let draws = complex_gaussians(seed, plan.node_count());
    StochasticProcess::from_draws(plan, &draws, seed).expect("draw count matches plan")
}

impl StochasticProcess {
    /// Realisation for explicitly given draws `Y_k`.
    pub fn from_draws(
        plan: &Arc<NoisePlan>,
        draws: &[Complex64],
        seed: u64,
    ) -> Result<Self, NoiseError> {
        if draws.len() != plan.node_count() {
            return Err(NoiseError::DrawCount {
                expected: plan.node_count(),
                got: draws.len(),
            });
        }
        let n = plan.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for ((b, &w), &y) in buf.iter_mut().zip(&plan.weights).zip(draws) {
            *b = y * (w / PI).sqrt();
        }
        plan.fft.0.process(&mut buf);
        for (l, b) in buf.iter_mut().enumerate() {
            *b *= Complex64::from_polar(1.0, -plan.omega_0 * l as f64 * plan.d_t);
        }
        let spline = spline_with_ghosts(&buf, plan.d_t);
        Ok(Self {
            plan: Arc::clone(plan),
            seed,
            spline,
            n,
        })
    }

    /// Process values on the grid `t_l = l dt`, `l < n`.
    pub fn values(&self) -> &[Complex64] {
        let g = GHOST_NODES.min(self.n - 1);
        &self.spline.values()[g..g + self.n]
    }

    pub fn t_end(&self) -> f64 {
        self.plan.horizon()
    }

    pub fn evaluate(&self, t: f64) -> Result<Complex64, NoiseError> {
        let t_end = self.t_end();
        if !(0.0..=t_end).contains(&t) {
            return Err(NoiseError::OutOfDomain { t, t_end });
        }
        Ok(self.spline.eval(t))
    }

    /// Spline value without the domain check.
    #[inline]
    pub fn eval_unchecked(&self, t: f64) -> Complex64 {
        self.spline.eval(t)
    }

    /// Writes `n`, `dt`, `seed` as little-endian 64-bit values followed by
    /// interleaved `(re, im)` little-endian doubles.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), NoiseError> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.plan.d_t.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for z in self.values() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Contents of a binary realisation dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessDump {
    pub dt: f64,
    pub seed: u64,
    pub values: Vec<Complex64>,
}

pub fn read_binary<R: Read>(mut r: R) -> Result<ProcessDump, NoiseError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let dt = f64::from_le_bytes(b);
    r.read_exact(&mut b)?;
    let seed = u64::from_le_bytes(b);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b)?;
        let re = f64::from_le_bytes(b);
        r.read_exact(&mut b)?;
        let im = f64::from_le_bytes(b);
        values.push(Complex64::new(re, im));
    }
    Ok(ProcessDump { dt, seed, values })
}

/// Sample statistics of a noise plan on a time grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrelationCheck {
    pub samples: usize,
    /// `max |<z(t) z*(s)> - alpha(t - s)|` over the grid pairs.
    pub max_autocorrelation_error: f64,
    /// `max |<z(t) z(s)>|` over the grid pairs.
    pub max_pseudo_correlation: f64,
    /// `abstol + 5 |alpha(0)| / sqrt(samples)`.
    pub bound: f64,
}

impl CorrelationCheck {
    pub fn passed(&self) -> bool {
        self.max_autocorrelation_error <= self.bound && self.max_pseudo_correlation <= self.bound
    }
}

/// Estimates auto- and pseudo-correlation from `samples` realisations with
/// seeds `derive_seed(master_seed, i, 0)` and compares with the reference
/// kernel of the plan's spectrum.
pub fn check_correlations(
    plan: &Arc<NoisePlan>,
    samples: usize,
    master_seed: u64,
    times: &[f64],
) -> Result<CorrelationCheck, NoiseError> {
    if samples == 0 {
        return Err(NoiseError::DrawCount {
            expected: 1,
            got: 0,
        });
    }
    let m = times.len();
    let mut auto = vec![Complex64::new(0.0, 0.0); m * m];
    let mut pseudo = vec![Complex64::new(0.0, 0.0); m * m];
    let mut vals = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..samples {
        let p = sample_process(plan, derive_seed(master_seed, i as u64, 0));
        for (v, &t) in vals.iter_mut().zip(times) {
            *v = p.evaluate(t)?;
        }
        for a in 0..m {
            for b in 0..m {
                auto[a * m + b] += vals[a] * vals[b].conj();
                pseudo[a * m + b] += vals[a] * vals[b];
            }
        }
    }
    let n = samples as f64;
    let mut max_auto: f64 = 0.0;
    let mut max_pseudo: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            let target = plan.spectrum.reference_kernel(times[a] - times[b]);
            max_auto = max_auto.max((auto[a * m + b] / n - target).norm());
            max_pseudo = max_pseudo.max((pseudo[a * m + b] / n).norm());
        }
    }
    let a0 = plan.spectrum.reference_kernel(0.0).norm();
    Ok(CorrelationCheck {
        samples,
        max_autocorrelation_error: max_auto,
        max_pseudo_correlation: max_pseudo,
        bound: plan.abstol + 5.0 * a0 / n.sqrt(),
    })
}
