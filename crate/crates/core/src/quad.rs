//! Adaptive Gauss–Kronrod quadrature.
//!
//! A global-adaptive 21-point Gauss–Kronrod scheme in the style of QUADPACK's
//! QAG, generic over real and complex integrands, plus helpers for the
//! half-line spectral integrals that appear throughout the crate: panel
//! splitting for oscillatory kernels and a power substitution for integrable
//! endpoint singularities at zero frequency.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_329_420,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// 10-point Gauss weights for the odd Kronrod nodes `XGK[1], XGK[3], ...`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Values that can be integrated: closed under addition and real scaling.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Default
{
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

fn kronrod21<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = T::default();
    let mut res_abs = fc.magnitude() * WGK[10];
    let mut fv1 = [T::default(); 10];
    let mut fv2 = [T::default(); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k = res_k + (f1 + f2) * WGK[j];
        res_abs += WGK[j] * (f1.magnitude() + f2.magnitude());
        if j % 2 == 1 {
            res_g = res_g + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).magnitude();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).magnitude();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Globally adaptive integration of `f` over `[a, b]`.
pub fn integrate<T: QuadValue, F: Fn(f64) -> T>(
    f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> QuadResult<T> {
    if a == b {
        return QuadResult {
            value: T::default(),
            error: 0.0,
            evals: 0,
            converged: true,
        };
    }
    let (v, e) = kronrod21(&f, a, b);
    let mut segs = vec![Segment {
        a,
        b,
        value: v,
        error: e,
    }];
    let mut evals = 21;
    loop {
        let total = segs.iter().fold(T::default(), |acc, s| acc + s.value);
        let err: f64 = segs.iter().map(|s| s.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        if err <= target {
            return QuadResult {
                value: total,
                error: err,
                evals,
                converged: true,
            };
        }
        if segs.len() >= opts.max_intervals {
            return QuadResult {
                value: total,
                error: err,
                evals,
                converged: false,
            };
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty segment list");
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // interval can no longer be split in floating point
            return QuadResult {
                value: total,
                error: err,
                evals,
                converged: false,
            };
        }
        let (v1, e1) = kronrod21(&f, s.a, mid);
        let (v2, e2) = kronrod21(&f, mid, s.b);
        evals += 42;
        segs.push(Segment {
            a: s.a,
            b: mid,
            value: v1,
            error: e1,
        });
        segs.push(Segment {
            a: mid,
            b: s.b,
            value: v2,
            error: e2,
        });
    }
}

/// Integrates `f` over `[0, b]` where `f(x) ~ x^exponent` near zero with
/// `exponent > -1`, via the substitution `x = u^q`, `q = 1/(1 + exponent)`,
/// which turns the leading power into a constant.
pub fn integrate_power_endpoint<T: QuadValue, F: Fn(f64) -> T>(
    f: F,
    b: f64,
    exponent: f64,
    opts: &QuadOptions,
) -> QuadResult<T> {
    assert!(exponent > -1.0, "endpoint exponent must exceed -1");
    let q = 1.0 / (1.0 + exponent);
    let ub = b.powf(1.0 + exponent);
    integrate(
        |u: f64| {
            if u <= 0.0 {
                return T::default();
            }
            let x = u.powf(q);
            f(x) * (q * x / u)
        },
        0.0,
        ub,
        opts,
    )
}

/// Integral over `[0, upper]` of a spectral integrand.
///
/// `endpoint_exponent` describes the power-law behaviour at zero (the first
/// panel is handled with [`integrate_power_endpoint`]); `oscillation` is the
/// largest angular frequency of an oscillating factor (e.g. `|tau|` for
/// `exp(-i omega tau)`), used to split the range into panels of at most half
/// a period.
pub fn integrate_spectral<T: QuadValue, F: Fn(f64) -> T>(
    f: F,
    upper: f64,
    endpoint_exponent: f64,
    oscillation: f64,
    opts: &QuadOptions,
) -> T {
    let base_panels = 16.0;
    let mut width = upper / base_panels;
    if oscillation > 0.0 {
        width = width.min(std::f64::consts::PI / oscillation);
    }
    let n_panels = (upper / width).ceil().max(1.0) as usize;
    let width = upper / n_panels as f64;
    let first = integrate_power_endpoint(&f, width, endpoint_exponent, opts);
    let mut total = first.value;
    let panel_opts = QuadOptions {
        abs_tol: opts.abs_tol / n_panels as f64,
        ..*opts
    };
    for p in 1..n_panels {
        let a = p as f64 * width;
        let b = if p + 1 == n_panels {
            upper
        } else {
            (p + 1) as f64 * width
        };
        total = total + integrate(&f, a, b, &panel_opts).value;
    }
    total
}
