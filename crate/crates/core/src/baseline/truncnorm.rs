//! Truncated normal distribution and the sample-maximum factor `f(Y)`.
//!
//! The approximated HighXofY baseline replaces the sample maximum of a window
//! by `mean + f(Y) * std`, where `f(Y)` estimates the expected maximum of `Y`
//! draws from a standardized truncated normal `N(0, 1, alpha, beta)`:
//!
//! ```text
//! f(Y) = Q[(0.5 + eps)^(1/Y)]
//! ```
//!
//! with `Q` the truncated quantile function. `eps` is calibrated by bisection
//! so that `f(Y)` matches the exact expected maximum
//!
//! ```text
//! E[max] = Y * integral_{alpha}^{beta} u * pdf(u) * cdf(u)^(Y-1) du
//! ```
//!
//! evaluated by adaptive Gauss-Kronrod quadrature.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const MODULE: &str = "baseline";

/// Absolute tolerance of the expected-maximum quadrature.
pub const QUAD_TOL: f64 = 1e-9;
/// Width at which the epsilon bisection stops.
pub const EPS_TOL: f64 = 1e-10;
/// Tolerance of the truncated quantile.
pub const QUANTILE_TOL: f64 = 1e-12;

/// A normal distribution `N(mu, sigma)` truncated to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormalSpec {
    pub mu: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncNormalSpec {
    pub fn new(mu: f64, sigma: f64, lower: f64, upper: f64) -> Result<Self> {
        let spec = Self { mu, sigma, lower, upper };
        spec.validate()?;
        Ok(spec)
    }

    /// Standard normal truncated to `[alpha, beta]`.
    pub fn standard(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(0.0, 1.0, alpha, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() || !self.mu.is_finite() {
            return Err(Error::param(
                MODULE,
                format!("truncated normal needs finite mu and sigma > 0, got mu={} sigma={}", self.mu, self.sigma),
            ));
        }
        if !(self.lower < self.upper) {
            return Err(Error::param(
                MODULE,
                format!("truncation bounds must satisfy lower < upper, got [{}, {}]", self.lower, self.upper),
            ));
        }
        let (alpha, beta) = self.standardized_bounds();
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::param(
                MODULE,
                format!("standardized bounds must be finite, got [{alpha}, {beta}]"),
            ));
        }
        Ok(())
    }

    pub fn standardized_bounds(&self) -> (f64, f64) {
        ((self.lower - self.mu) / self.sigma, (self.upper - self.mu) / self.sigma)
    }

    pub fn standardized(&self) -> Result<StdTruncNormal> {
        self.validate()?;
        let (alpha, beta) = self.standardized_bounds();
        StdTruncNormal::new(alpha, beta)
    }
}

fn norm_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

fn norm_cdf(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

fn norm_sf(u: f64) -> f64 {
    0.5 * erfc(u * FRAC_1_SQRT_2)
}

/// Standard normal truncated to `[alpha, beta]`.
///
/// Probabilities are computed from the upper tail when the interval sits in
/// the right tail, which keeps the normalizing mass accurate far from zero.
#[derive(Debug, Clone, Copy)]
pub struct StdTruncNormal {
    alpha: f64,
    beta: f64,
    upper_tail: bool,
    anchor: f64,
    mass: f64,
}

impl StdTruncNormal {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha < beta) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::param(MODULE, format!("invalid standardized bounds [{alpha}, {beta}]")));
        }
        let upper_tail = alpha > 0.0;
        let (anchor, mass) = if upper_tail {
            let sa = norm_sf(alpha);
            (sa, sa - norm_sf(beta))
        } else {
            let ca = norm_cdf(alpha);
            (ca, norm_cdf(beta) - ca)
        };
        if !(mass > 0.0) {
            return Err(Error::numeric(
                MODULE,
                format!("truncation interval [{alpha}, {beta}] carries no probability mass"),
            ));
        }
        Ok(Self { alpha, beta, upper_tail, anchor, mass })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn pdf(&self, u: f64) -> f64 {
        if u < self.alpha || u > self.beta {
            0.0
        } else {
            norm_pdf(u) / self.mass
        }
    }

    pub fn cdf(&self, u: f64) -> f64 {
        if u <= self.alpha {
            return 0.0;
        }
        if u >= self.beta {
            return 1.0;
        }
        let p = if self.upper_tail {
            (self.anchor - norm_sf(u)) / self.mass
        } else {
            (norm_cdf(u) - self.anchor) / self.mass
        };
        p.clamp(0.0, 1.0)
    }

    /// Inverse CDF by safeguarded Newton iteration inside a shrinking bracket.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(MODULE, format!("quantile probability {p} outside [0, 1]")));
        }
        if p == 0.0 {
            return Ok(self.alpha);
        }
        if p == 1.0 {
            return Ok(self.beta);
        }
        let (mut lo, mut hi) = (self.alpha, self.beta);
        let mut u = 0.5 * (lo + hi);
        for _ in 0..200 {
            let err = self.cdf(u) - p;
            if err > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            if hi - lo < QUANTILE_TOL {
                break;
            }
            let dens = self.pdf(u);
            let newton = if dens > 0.0 { u - err / dens } else { f64::NAN };
            let step = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (step - u).abs() < QUANTILE_TOL {
                u = step;
                break;
            }
            u = step;
        }
        Ok(u)
    }
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration to an absolute tolerance.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4096;
    let (first, err) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, first, err)];
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= tol {
            return Ok(intervals.iter().map(|iv| iv.2).sum());
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::numeric(
                MODULE,
                format!("quadrature on [{a}, {b}] did not reach tolerance {tol:e} (error estimate {total_err:e})"),
            ));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (left, left_err) = gk15(&f, lo, mid);
        let (right, right_err) = gk15(&f, mid, hi);
        intervals.push((lo, mid, left, left_err));
        intervals.push((mid, hi, right, right_err));
    }
}

/// Expected maximum of `y` i.i.d. draws from the standardized truncated normal.
pub fn expected_sample_max(y: usize, dist: &StdTruncNormal) -> Result<f64> {
    if y == 0 {
        return Err(Error::param(MODULE, "sample size Y must be at least 1"));
    }
    let n = y as f64;
    let power = (y - 1) as i32;
    integrate(
        |u| n * u * dist.pdf(u) * dist.cdf(u).powi(power),
        dist.alpha(),
        dist.beta(),
        QUAD_TOL,
    )
}

/// Calibrates `eps` so that `Q[(0.5 + eps)^(1/Y)]` equals the expected sample
/// maximum of the standardized truncation of `spec`.
pub fn estimate_epsilon(y: usize, spec: &TruncNormalSpec) -> Result<f64> {
    let dist = spec.standardized()?;
    let target = expected_sample_max(y, &dist)?;
    epsilon_for_target(y, &dist, target)
}

fn epsilon_for_target(y: usize, dist: &StdTruncNormal, target: f64) -> Result<f64> {
    let inv_y = 1.0 / y as f64;
    let factor = |eps: f64| dist.quantile((0.5 + eps).powf(inv_y));
    let (mut lo, mut hi) = (-0.5_f64, 0.5_f64);
    let f_lo = factor(lo)? - target;
    let f_hi = factor(hi)? - target;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::numeric(
            MODULE,
            format!(
                "epsilon bisection not bracketed for Y={y}, bounds [{}, {}]: target {target}, residuals {f_lo:e}..{f_hi:e}",
                dist.alpha(),
                dist.beta()
            ),
        ));
    }
    let mut iterations = 0;
    while hi - lo > EPS_TOL {
        iterations += 1;
        if iterations > 200 {
            return Err(Error::numeric(
                MODULE,
                format!("epsilon bisection failed to converge for Y={y} (bracket [{lo}, {hi}])"),
            ));
        }
        let mid = 0.5 * (lo + hi);
        if factor(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The sample-maximum factor `f(Y)` for the standardized truncation of `spec`.
pub fn sample_max_factor(y: usize, spec: &TruncNormalSpec) -> Result<f64> {
    let dist = spec.standardized()?;
    let target = expected_sample_max(y, &dist)?;
    let eps = epsilon_for_target(y, &dist, target)?;
    dist.quantile((0.5 + eps).powf(1.0 / y as f64))
}

type FactorKey = (usize, u64, u64);

fn factor_cache() -> &'static RwLock<HashMap<FactorKey, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<FactorKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

const CACHE_CAPACITY: usize = 1 << 16;

/// Memoized [`sample_max_factor`], keyed by `Y` and the standardized bounds.
pub fn cached_sample_max_factor(y: usize, spec: &TruncNormalSpec) -> Result<f64> {
    spec.validate()?;
    let (alpha, beta) = spec.standardized_bounds();
    let key = (y, alpha.to_bits(), beta.to_bits());
    if let Some(v) = factor_cache().read().ok().and_then(|c| c.get(&key).copied()) {
        return Ok(v);
    }
    let value = sample_max_factor(y, spec)?;
    if let Ok(mut cache) = factor_cache().write() {
        if cache.len() >= CACHE_CAPACITY {
            cache.clear();
        }
        cache.insert(key, value);
    }
    Ok(value)
}
