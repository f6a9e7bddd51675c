//! Average customer baselines.
//!
//! A baseline is computed from the consumption of the last `Y` non-DR days,
//! ordered most recent first. HighXofY, LowXofY and MidXofY average the
//! largest, smallest and middle `X` values. The approximated HighXofY replaces
//! the order statistics by `mean + (Y-X)/(Y-1) * f(Y) * std`, see
//! [`truncnorm`] for `f(Y)`.

pub mod truncnorm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use truncnorm::{
    cached_sample_max_factor, estimate_epsilon, expected_sample_max, sample_max_factor, StdTruncNormal,
    TruncNormalSpec,
};

const MODULE: &str = "baseline";

/// Standard deviation floor used when fitting a truncation to a window.
pub const SIGMA_FLOOR: f64 = 1e-9;

/// Recent non-DR consumption, most recent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConsumptionWindow(Vec<f64>);

impl ConsumptionWindow {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param(MODULE, "consumption window must hold at least one value"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::domain(MODULE, format!("window entry {i} is {v}; consumption must be finite and >= 0")));
        }
        Ok(Self(values))
    }

    /// `len` copies of `value`.
    pub fn constant(value: f64, len: usize) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.0)
    }

    /// New window with `newest` in front and the oldest value dropped.
    pub fn shifted(&self, newest: f64) -> Result<Self> {
        let mut v = Vec::with_capacity(self.0.len());
        v.push(newest);
        v.extend_from_slice(&self.0[..self.0.len() - 1]);
        Self::new(v)
    }

    /// Componentwise maximum.
    pub fn join(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, f64::max)
    }

    /// Componentwise minimum.
    pub fn meet(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, f64::min)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::param(MODULE, "windows differ in length"));
        }
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| f(*a, *b)).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ConsumptionWindow {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConsumptionWindow> for Vec<f64> {
    fn from(w: ConsumptionWindow) -> Self {
        w.0
    }
}

impl AsRef<[f64]> for ConsumptionWindow {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with divisor `Y-1`; zero for a single value.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

fn check_x(values: &[f64], x: usize) -> Result<()> {
    if values.is_empty() {
        return Err(Error::param(MODULE, "empty consumption window"));
    }
    if x == 0 || x > values.len() {
        return Err(Error::param(MODULE, format!("X={x} outside 1..={}", values.len())));
    }
    Ok(())
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Mean of the `x` largest values.
pub fn high_x_of_y(values: &[f64], x: usize) -> Result<f64> {
    check_x(values, x)?;
    let v = sorted_desc(values);
    Ok(mean(&v[..x]))
}

/// Mean of the `x` smallest values.
pub fn low_x_of_y(values: &[f64], x: usize) -> Result<f64> {
    check_x(values, x)?;
    let v = sorted_desc(values);
    Ok(mean(&v[values.len() - x..]))
}

/// Mean of the `x` middle values; `x` and `Y` must share parity.
pub fn mid_x_of_y(values: &[f64], x: usize) -> Result<f64> {
    check_x(values, x)?;
    let y = values.len();
    if !(y - x).is_multiple_of(2) {
        return Err(Error::param(MODULE, format!("MidXofY needs X and Y of equal parity, got X={x}, Y={y}")));
    }
    let v = sorted_desc(values);
    let drop = (y - x) / 2;
    Ok(mean(&v[drop..drop + x]))
}

/// How the truncated normal behind `f(Y)` is chosen for a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Fit `mu` and `sigma` to the window's sample mean and standard
    /// deviation and truncate to `[lower, upper]`.
    Plugin { lower: f64, upper: f64 },
    /// Use a fixed distribution for every window.
    Fixed(TruncNormalSpec),
}

impl Truncation {
    /// Plug-in truncation to the physical range `[0, a_hat]`.
    pub fn physical(a_hat: f64) -> Self {
        Truncation::Plugin { lower: 0.0, upper: a_hat }
    }

    pub fn spec_for(&self, values: &[f64]) -> Result<TruncNormalSpec> {
        match *self {
            Truncation::Plugin { lower, upper } => {
                TruncNormalSpec::new(mean(values), sample_std(values).max(SIGMA_FLOOR), lower, upper)
            }
            Truncation::Fixed(spec) => {
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}

fn check_approx(values: &[f64], x: usize) -> Result<()> {
    check_x(values, x)?;
    if values.len() < 2 {
        return Err(Error::param(MODULE, "approximated baselines need Y >= 2"));
    }
    Ok(())
}

fn lambda(x: usize, y: usize) -> f64 {
    (x - 1) as f64 / (y - 1) as f64
}

/// Approximated HighXofY: `mean + (Y-X)/(Y-1) * f(Y) * std`.
///
/// A window with zero spread returns its mean without evaluating `f(Y)`.
pub fn approx_high_x_of_y(values: &[f64], x: usize, truncation: &Truncation) -> Result<f64> {
    check_approx(values, x)?;
    let y = values.len();
    let m = mean(values);
    let s = sample_std(values);
    if x == y || s == 0.0 {
        return Ok(m);
    }
    let spec = truncation.spec_for(values)?;
    let f = cached_sample_max_factor(y, &spec)?;
    Ok(m + (y - x) as f64 / (y - 1) as f64 * f * s)
}

/// Approximated LowXofY: convex combination of the mean and the sample minimum.
pub fn approx_low_x_of_y(values: &[f64], x: usize) -> Result<f64> {
    check_approx(values, x)?;
    let l = lambda(x, values.len());
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(l * mean(values) + (1.0 - l) * min)
}

/// Approximated MidXofY: convex combination of the mean and the sample median.
pub fn approx_mid_x_of_y(values: &[f64], x: usize) -> Result<f64> {
    check_approx(values, x)?;
    let l = lambda(x, values.len());
    let v = sorted_desc(values);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    Ok(l * mean(values) + (1.0 - l) * median)
}

/// Percent error of an approximated baseline relative to the approximation.
pub fn approx_error_percent(actual: f64, approx: f64) -> Result<f64> {
    if !(approx > 0.0) {
        return Err(Error::domain(MODULE, format!("approximated baseline must be > 0, got {approx}")));
    }
    Ok((actual - approx) / approx * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    HighXofY,
    LowXofY,
    MidXofY,
    ApproxHighXofY(Truncation),
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::HighXofY => "high",
            BaselineMethod::LowXofY => "low",
            BaselineMethod::MidXofY => "mid",
            BaselineMethod::ApproxHighXofY(_) => "approx_high",
        }
    }
}

/// Parameters of a baseline-based rebate program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrProgram {
    x: usize,
    y: usize,
    rebate: f64,
    method: BaselineMethod,
}

impl DrProgram {
    pub fn new(method: BaselineMethod, x: usize, y: usize, rebate: f64) -> Result<Self> {
        if y == 0 || x == 0 || x > y {
            return Err(Error::param(MODULE, format!("program needs 1 <= X <= Y, got X={x}, Y={y}")));
        }
        if !(rebate >= 0.0) || !rebate.is_finite() {
            return Err(Error::param(MODULE, format!("rebate price must be finite and >= 0, got {rebate}")));
        }
        match method {
            BaselineMethod::MidXofY if !(y - x).is_multiple_of(2) => {
                return Err(Error::param(MODULE, format!("MidXofY needs X and Y of equal parity, got X={x}, Y={y}")));
            }
            BaselineMethod::ApproxHighXofY(_) if y < 2 => {
                return Err(Error::param(MODULE, "approximated HighXofY needs Y >= 2"));
            }
            _ => {}
        }
        Ok(Self { x, y, rebate, method })
    }

    pub fn high(x: usize, y: usize, rebate: f64) -> Result<Self> {
        Self::new(BaselineMethod::HighXofY, x, y, rebate)
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn y(&self) -> usize {
        self.y
    }

    pub fn rebate(&self) -> f64 {
        self.rebate
    }

    pub fn method(&self) -> BaselineMethod {
        self.method
    }

    pub fn with_x(&self, x: usize) -> Result<Self> {
        Self::new(self.method, x, self.y, self.rebate)
    }

    pub fn with_rebate(&self, rebate: f64) -> Result<Self> {
        Self::new(self.method, self.x, self.y, rebate)
    }

    /// Baseline of a window of length `Y`.
    pub fn baseline(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.y {
            return Err(Error::param(
                MODULE,
                format!("window has {} values but the program uses Y={}", values.len(), self.y),
            ));
        }
        match &self.method {
            BaselineMethod::HighXofY => high_x_of_y(values, self.x),
            BaselineMethod::LowXofY => low_x_of_y(values, self.x),
            BaselineMethod::MidXofY => mid_x_of_y(values, self.x),
            BaselineMethod::ApproxHighXofY(t) => approx_high_x_of_y(values, self.x, t),
        }
    }
}
