//! Exponential customer utility and the closed-form per-day optima.
//!
//! Utility on a day with scale `z` is `z * gamma * (1 - exp(-a / rho))` and
//! net utility subtracts the retail cost `omega * a`. Consumption is bounded
//! to `[0, a_hat]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODULE: &str = "utility";

/// Default maximum relative utility.
pub const DEFAULT_U_CHECK: f64 = 0.99;
/// Default ratio of the consumption cap to the historical maximum.
pub const DEFAULT_CAP_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub rho: f64,
    pub gamma: f64,
    pub omega: f64,
    pub a_hat: f64,
    pub u_check: f64,
}

impl UtilityParams {
    pub fn new(rho: f64, gamma: f64, omega: f64, a_hat: f64, u_check: f64) -> Result<Self> {
        let p = Self { rho, gamma, omega, a_hat, u_check };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("rho", self.rho), ("gamma", self.gamma), ("omega", self.omega), ("a_hat", self.a_hat)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(MODULE, format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.u_check > 0.0 && self.u_check < 1.0) {
            return Err(Error::param(MODULE, format!("u_check must lie in (0, 1), got {}", self.u_check)));
        }
        Ok(())
    }

    fn check_action(&self, a: f64) -> Result<()> {
        if !(0.0..=self.a_hat).contains(&a) {
            return Err(Error::domain(MODULE, format!("consumption {a} outside [0, {}]", self.a_hat)));
        }
        Ok(())
    }

    fn check_z(z: f64) -> Result<()> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain(MODULE, format!("utility scale z must be > 0, got {z}")));
        }
        Ok(())
    }

    /// Saturation level of the utility, its limit as consumption grows.
    pub fn saturation(&self, z: f64) -> f64 {
        z * self.gamma
    }

    pub fn utility(&self, a: f64, z: f64) -> Result<f64> {
        self.check_action(a)?;
        Self::check_z(z)?;
        Ok(self.raw_utility(a, z))
    }

    pub fn net_utility(&self, a: f64, z: f64) -> Result<f64> {
        self.check_action(a)?;
        Self::check_z(z)?;
        Ok(self.net(a, z))
    }

    #[inline]
    pub(crate) fn raw_utility(&self, a: f64, z: f64) -> f64 {
        z * self.gamma * (1.0 - (-a / self.rho).exp())
    }

    /// Net utility without range checks, for inner loops.
    #[inline]
    pub(crate) fn net(&self, a: f64, z: f64) -> f64 {
        self.raw_utility(a, z) - self.omega * a
    }

    /// Derivative of net utility in `a`.
    pub fn marginal_net_utility(&self, a: f64, z: f64) -> f64 {
        z * self.gamma / self.rho * (-a / self.rho).exp() - self.omega
    }

    /// Stationary point of `u(a) - price * a` clamped into `[0, a_hat]`.
    fn clamped_optimum(&self, z: f64, price: f64) -> f64 {
        let ratio = z * self.gamma / (self.rho * price);
        if ratio <= 1.0 {
            return 0.0;
        }
        (self.rho * ratio.ln()).clamp(0.0, self.a_hat)
    }

    /// Intrinsic baseline: the maximizer of net utility on `[0, a_hat]`.
    pub fn intrinsic_baseline(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        Ok(self.clamped_optimum(z, self.omega))
    }

    /// Maximizer of net utility minus the rebate price on reduced load.
    pub fn penalized_optimum(&self, z: f64, r: f64) -> Result<f64> {
        Self::check_z(z)?;
        check_rebate(r)?;
        Ok(self.clamped_optimum(z, self.omega + r))
    }

    /// Baseline level above which curtailing to the penalized optimum pays
    /// off on a DR day. `f64::INFINITY` when `r = 0`.
    pub fn threshold_baseline(&self, z: f64, r: f64) -> Result<f64> {
        Self::check_z(z)?;
        check_rebate(r)?;
        if r == 0.0 {
            return Ok(f64::INFINITY);
        }
        let a_b = self.clamped_optimum(z, self.omega);
        let a_u = self.clamped_optimum(z, self.omega + r);
        Ok((self.net(a_b, z) - self.net(a_u, z)) / r + a_u)
    }

    /// Optimal DR-day consumption given the day's baseline.
    pub fn dr_day_policy(&self, baseline: f64, z: f64, r: f64) -> Result<f64> {
        let threshold = self.threshold_baseline(z, r)?;
        if baseline < threshold {
            self.intrinsic_baseline(z)
        } else {
            self.penalized_optimum(z, r)
        }
    }

    /// Per-`z` quantities used repeatedly by the solvers.
    pub fn day_optima(&self, z: f64, r: f64) -> Result<DayOptima> {
        Ok(DayOptima {
            intrinsic: self.intrinsic_baseline(z)?,
            penalized: self.penalized_optimum(z, r)?,
            threshold: self.threshold_baseline(z, r)?,
        })
    }
}

/// Intrinsic baseline, penalized optimum and threshold baseline for one `(z, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayOptima {
    pub intrinsic: f64,
    pub penalized: f64,
    pub threshold: f64,
}

impl DayOptima {
    pub fn dr_action(&self, baseline: f64) -> f64 {
        if baseline < self.threshold {
            self.intrinsic
        } else {
            self.penalized
        }
    }
}

fn check_rebate(r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::param(MODULE, format!("rebate price must be finite and >= 0, got {r}")));
    }
    Ok(())
}

/// Fits `rho` and `gamma` so that the historical mean is the optimal
/// consumption at `z = 1` and the historical maximum reaches `u_check` of the
/// saturation utility. The cap `a_hat` is `cap_factor` times the maximum.
pub fn estimate_params(history: &[f64], omega: f64, u_check: f64) -> Result<UtilityParams> {
    estimate_params_with_cap(history, omega, u_check, DEFAULT_CAP_FACTOR)
}

pub fn estimate_params_with_cap(history: &[f64], omega: f64, u_check: f64, cap_factor: f64) -> Result<UtilityParams> {
    if history.is_empty() {
        return Err(Error::data(MODULE, "empty consumption history"));
    }
    if let Some((i, v)) = history.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::data(MODULE, format!("history entry {i} is {v}; consumption must be >= 0")));
    }
    if !(cap_factor >= 1.0) {
        return Err(Error::param(MODULE, format!("cap factor must be >= 1, got {cap_factor}")));
    }
    let mean = history.iter().sum::<f64>() / history.len() as f64;
    let max = history.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !(mean > 0.0) {
        return Err(Error::data(MODULE, "history must have positive mean and maximum"));
    }
    if !(u_check > 0.0 && u_check < 1.0) {
        return Err(Error::param(MODULE, format!("u_check must lie in (0, 1), got {u_check}")));
    }
    let rho = -max / (1.0 - u_check).ln();
    let gamma = omega * rho * (mean / rho).exp();
    UtilityParams::new(rho, gamma, omega, cap_factor * max, u_check)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_params() -> UtilityParams {
        UtilityParams::new(1.56, 1.25, 0.12, 10.77, 0.99).unwrap()
    }

    fn grid_argmax(f: impl Fn(f64) -> f64, hi: f64, n: usize) -> f64 {
        let step = hi / n as f64;
        (0..=n)
            .map(|i| i as f64 * step)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap()
    }

    #[test]
    fn utility_values() {
        let p = paper_params();
        assert_eq!(p.utility(0.0, 1.0).unwrap(), 0.0);
        assert!((p.utility(2.96, 1.0).unwrap() - 1.0625).abs() < 5e-4);
        assert!((p.net_utility(2.96, 1.0).unwrap() - 0.707).abs() < 5e-4);
        assert_eq!(p.net_utility(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(p.saturation(1.0), 1.25);
        assert!(p.utility(-0.1, 1.0).is_err());
        assert!(p.utility(11.0, 1.0).is_err());
        assert!(p.utility(1.0, 0.0).is_err());
    }

    #[test]
    fn net_utility_concave() {
        let p = paper_params();
        let h = 0.05;
        for i in 1..200 {
            let a = i as f64 * h;
            if a + h > p.a_hat {
                break;
            }
            let d2 = p.net(a + h, 1.0) - 2.0 * p.net(a, 1.0) + p.net(a - h, 1.0);
            assert!(d2 <= 0.0);
        }
    }

    #[test]
    fn intrinsic_baseline_matches_grid_search() {
        let p = paper_params();
        for &z in &[0.5, 0.8, 1.0, 1.2, 2.0] {
            let closed = p.intrinsic_baseline(z).unwrap();
            let grid = grid_argmax(|a| p.net(a, z), p.a_hat, 100_000);
            assert!((closed - grid).abs() < 2e-4, "z={z}: {closed} vs {grid}");
            assert!(p.marginal_net_utility(closed, z).abs() < 1e-12 || closed == 0.0);
        }
        assert!((p.intrinsic_baseline(1.2).unwrap() - 3.246).abs() < 1e-3);
        // z * gamma / (rho * omega) <= 1 gives the corner at zero.
        assert_eq!(p.intrinsic_baseline(0.1).unwrap(), 0.0);
    }

    #[test]
    fn penalized_optimum_examples() {
        let p = paper_params();
        assert_eq!(p.penalized_optimum(1.0, 0.0).unwrap(), p.intrinsic_baseline(1.0).unwrap());
        let a_u = p.penalized_optimum(1.0, 0.12).unwrap();
        let grid = grid_argmax(|a| p.net(a, 1.0) - 0.12 * a, p.a_hat, 100_000);
        assert!((a_u - grid).abs() < 2e-4);
        assert!((a_u - 1.88).abs() < 5e-3);
        for &z in &[0.3, 0.8, 1.0, 1.5, 4.0] {
            for &r in &[0.0, 0.03, 0.12, 0.5] {
                assert!(p.penalized_optimum(z, r).unwrap() <= p.intrinsic_baseline(z).unwrap());
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let p = paper_params();
        let b = p.threshold_baseline(1.0, 0.12).unwrap();
        assert!((b - 2.36).abs() < 5e-3, "{b}");
        // Solve pi(aB) = pi(aU) + r (B - aU) by bisection as an oracle.
        let a_b = p.intrinsic_baseline(1.0).unwrap();
        let a_u = p.penalized_optimum(1.0, 0.12).unwrap();
        let g = |bl: f64| p.net(a_u, 1.0) + 0.12 * (bl - a_u) - p.net(a_b, 1.0);
        let (mut lo, mut hi) = (a_u, a_b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((b - 0.5 * (lo + hi)).abs() < 1e-9);
        assert!(g(b).abs() < 1e-9);
        assert_eq!(p.threshold_baseline(1.0, 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn threshold_ordering_over_grid() {
        let p = paper_params();
        for i in 1..=40 {
            let z = 0.1 * i as f64;
            for j in 1..=20 {
                let r = 0.015 * j as f64;
                let o = p.day_optima(z, r).unwrap();
                assert!(o.penalized <= o.threshold + 1e-12, "z={z} r={r}");
                assert!(o.threshold <= o.intrinsic + 1e-12, "z={z} r={r}");
            }
        }
    }

    #[test]
    fn degenerate_threshold_equals_intrinsic() {
        // Both optima clamp to zero.
        let p = paper_params();
        let o = p.day_optima(0.05, 0.12).unwrap();
        assert_eq!(o.penalized, o.intrinsic);
        assert_eq!(o.threshold, o.intrinsic);
    }

    #[test]
    fn dr_day_policy_matches_brute_force() {
        let p = paper_params();
        let n = 20_000;
        let step = p.a_hat / n as f64;
        for &z in &[0.8, 1.0, 1.2] {
            for &r in &[0.06, 0.12, 0.18] {
                for k in 0..=24 {
                    let baseline = p.a_hat * k as f64 / 24.0;
                    let objective = |a: f64| p.net(a, z) + r * (baseline - a).max(0.0);
                    let brute = grid_argmax(objective, p.a_hat, n);
                    let closed = p.dr_day_policy(baseline, z, r).unwrap();
                    let gap = objective(brute) - objective(closed);
                    assert!(gap < 1e-6, "z={z} r={r} B={baseline}: {brute} vs {closed}");
                    assert!((brute - closed).abs() <= step + 1e-9 || gap.abs() < 1e-7);
                }
            }
        }
        assert_eq!(p.dr_day_policy(0.0, 1.0, 0.12).unwrap(), p.intrinsic_baseline(1.0).unwrap());
        assert!(p.threshold_baseline(1.0, 0.12).unwrap() < p.a_hat);
        assert_eq!(p.dr_day_policy(p.a_hat, 1.0, 0.12).unwrap(), p.penalized_optimum(1.0, 0.12).unwrap());
    }

    #[test]
    fn estimate_round_trip() {
        // Invert the fit: the mean and maximum that produce rho=1.56, gamma=1.25.
        let rho: f64 = 1.56;
        let gamma: f64 = 1.25;
        let max = -rho * (0.01_f64).ln();
        let mean = rho * (gamma / (0.12 * rho)).ln();
        assert!((max - 7.18).abs() < 0.01 && (mean - 2.96).abs() < 0.01);
        // History with the required mean and maximum.
        let rest = (4.0 * mean - max) / 3.0;
        let history = vec![max, rest, rest, rest];
        let m = history.iter().sum::<f64>() / history.len() as f64;
        assert!((m - mean).abs() < 1e-9);
        let p = estimate_params(&history, 0.12, 0.99).unwrap();
        assert!((p.rho - rho).abs() < 1e-9);
        assert!((p.gamma - gamma).abs() < 1e-9);
        assert!((p.intrinsic_baseline(1.0).unwrap() - mean).abs() < 1e-9);
        assert!((p.a_hat - 1.5 * max).abs() < 1e-9);
    }

    #[test]
    fn estimate_scales_rho_linearly() {
        let h = [1.0, 3.0, 2.5, 4.0];
        let p1 = estimate_params(&h, 0.12, 0.99).unwrap();
        let h3: Vec<f64> = h.iter().map(|v| v * 3.0).collect();
        let p3 = estimate_params(&h3, 0.12, 0.99).unwrap();
        assert!((p3.rho - 3.0 * p1.rho).abs() < 1e-12);
    }

    #[test]
    fn estimated_mean_is_grid_argmax() {
        let h = [2.0, 3.5, 1.2, 7.18, 2.96, 0.9];
        let p = estimate_params(&h, 0.12, 0.99).unwrap();
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        let n = 10_000;
        let step = p.a_hat / n as f64;
        let arg = grid_argmax(|a| p.net(a, 1.0), p.a_hat, n);
        assert!((arg - mean).abs() <= step);
    }

    #[test]
    fn estimate_errors() {
        assert!(estimate_params(&[], 0.12, 0.99).is_err());
        assert!(estimate_params(&[0.0, 0.0], 0.12, 0.99).is_err());
        assert!(estimate_params(&[1.0, -1.0], 0.12, 0.99).is_err());
        assert!(estimate_params(&[1.0, 2.0], 0.12, 1.0).is_err());
    }
}
