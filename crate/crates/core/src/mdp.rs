//! The customer's decision process: states, window transition, DR-event
//! chain, immediate payoff and rebate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{ConsumptionWindow, DrProgram};
use crate::error::{Error, Result};
use crate::utility::UtilityParams;

const MODULE: &str = "mdp";

/// Utility scale of a day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayContext {
    z: f64,
}

impl DayContext {
    pub fn new(z: f64) -> Result<Self> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain(MODULE, format!("utility scale z must be > 0, got {z}")));
        }
        Ok(Self { z })
    }

    pub fn z(&self) -> f64 {
        self.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub window: ConsumptionWindow,
    pub dr: bool,
    pub day: DayContext,
}

impl State {
    pub fn new(window: ConsumptionWindow, dr: bool, z: f64) -> Result<Self> {
        Ok(Self { window, dr, day: DayContext::new(z)? })
    }

    pub fn z(&self) -> f64 {
        self.day.z()
    }
}

/// Two-state Markov chain of DR events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrChain {
    /// Probability of a DR day after a non-DR day.
    pub p0: f64,
    /// Probability of a DR day after a DR day.
    pub p1: f64,
}

impl Default for DrChain {
    fn default() -> Self {
        Self { p0: 0.2, p1: 0.4 }
    }
}

impl DrChain {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        for (name, p) in [("p0", p0), ("p1", p1)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(MODULE, format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(Self { p0, p1 })
    }

    /// `p(y_next | y_now)`.
    pub fn prob(&self, y_now: bool, y_next: bool) -> f64 {
        let p_dr = if y_now { self.p1 } else { self.p0 };
        if y_next {
            p_dr
        } else {
            1.0 - p_dr
        }
    }

    /// Long-run fraction of DR days; `None` when the chain is absorbing in
    /// both states.
    pub fn stationary_dr_fraction(&self) -> Option<f64> {
        let denom = self.p0 + 1.0 - self.p1;
        (denom > 0.0).then(|| self.p0 / denom)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, y_now: bool, rng: &mut R) -> bool {
        let p = if y_now { self.p1 } else { self.p0 };
        rng.gen::<f64>() < p
    }
}

/// Number of decision days. The terminal payoff is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    days: usize,
}

impl Horizon {
    pub fn new(days: usize) -> Result<Self> {
        if days == 0 {
            return Err(Error::param(MODULE, "horizon needs at least one day"));
        }
        Ok(Self { days })
    }

    pub fn days(&self) -> usize {
        self.days
    }
}

/// Finite distribution of the utility scale, drawn i.i.d. each day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl Default for ZDistribution {
    fn default() -> Self {
        Self { values: vec![0.8, 1.0, 1.2], probs: vec![1.0 / 3.0; 3] }
    }
}

impl ZDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::param(MODULE, "z distribution needs matching, non-empty values and probabilities"));
        }
        if values.iter().any(|z| !(*z > 0.0) || !z.is_finite()) {
            return Err(Error::param(MODULE, "z values must be finite and > 0"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param(MODULE, "z values must be strictly increasing"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param(MODULE, "z probabilities must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(MODULE, format!("z probabilities sum to {total}, not 1")));
        }
        Ok(Self { values, probs })
    }

    pub fn degenerate(z: f64) -> Result<Self> {
        Self::new(vec![z], vec![1.0])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of an exact support value.
    pub fn index_of(&self, z: f64) -> Option<usize> {
        self.values.iter().position(|v| (v - z).abs() <= 1e-12 * v.abs().max(1.0))
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// Everything that defines the decision problem apart from the start state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub horizon: Horizon,
    pub program: DrProgram,
    pub params: UtilityParams,
    pub chain: DrChain,
    pub z: ZDistribution,
}

impl Model {
    pub fn with_program(&self, program: DrProgram) -> Self {
        Self { program, ..self.clone() }
    }
}

/// Next window: unchanged on a DR day, otherwise `action` is pushed in front.
pub fn transition_window(state: &State, action: f64, a_hat: f64) -> Result<ConsumptionWindow> {
    if !(0.0..=a_hat).contains(&action) {
        return Err(Error::domain(MODULE, format!("action {action} outside [0, {a_hat}]")));
    }
    if state.dr {
        Ok(state.window.clone())
    } else {
        state.window.shifted(action)
    }
}

/// Rebate earned on a day: `r * max(B - a, 0)` on DR days, zero otherwise.
pub fn rebate(window: &ConsumptionWindow, dr: bool, action: f64, program: &DrProgram) -> Result<f64> {
    if !dr {
        return Ok(0.0);
    }
    let b = program.baseline(window.values())?;
    Ok(program.rebate() * (b - action).max(0.0))
}

/// Net utility of the action plus the day's rebate.
pub fn immediate_payoff(state: &State, action: f64, program: &DrProgram, params: &UtilityParams) -> Result<f64> {
    let pi = params.net_utility(action, state.z())?;
    Ok(pi + rebate(&state.window, state.dr, action, program)?)
}

/// A policy mapping a state on a given day of a given scenario to consumption.
pub trait Policy: Sync {
    fn action(&self, step: Step, state: &State) -> Result<f64>;
}

/// Where a decision is taken: scenario index and day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub path: u64,
    pub t: usize,
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action(&self, step: Step, state: &State) -> Result<f64> {
        (**self).action(step, state)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn action(&self, step: Step, state: &State) -> Result<f64> {
        (**self).action(step, state)
    }
}

/// Consumes the intrinsic baseline `a^B(z)` every day.
#[derive(Debug, Clone, Copy)]
pub struct IntrinsicPolicy {
    pub params: UtilityParams,
}

impl Policy for IntrinsicPolicy {
    fn action(&self, _step: Step, state: &State) -> Result<f64> {
        self.params.intrinsic_baseline(state.z())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::DrProgram;

    fn params() -> UtilityParams {
        UtilityParams::new(1.56, 1.25, 0.12, 10.77, 0.99).unwrap()
    }

    fn window(v: &[f64]) -> ConsumptionWindow {
        ConsumptionWindow::new(v.to_vec()).unwrap()
    }

    #[test]
    fn window_transition() {
        let s = State::new(window(&[1.0, 2.0, 3.0]), true, 1.0).unwrap();
        assert_eq!(transition_window(&s, 5.0, 10.0).unwrap(), s.window);
        let s = State::new(window(&[1.0, 2.0, 3.0]), false, 1.0).unwrap();
        assert_eq!(transition_window(&s, 9.0, 10.0).unwrap().values(), &[9.0, 1.0, 2.0]);
        assert!(transition_window(&s, 10.5, 10.0).is_err());
        assert!(transition_window(&s, -1.0, 10.0).is_err());
    }

    #[test]
    fn y_shifts_replace_window() {
        let mut s = State::new(window(&[7.0, 7.0, 7.0]), false, 1.0).unwrap();
        for a in [1.0, 2.0, 3.0] {
            s.window = transition_window(&s, a, 10.0).unwrap();
        }
        assert_eq!(s.window.values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn rebate_cases() {
        let p = DrProgram::high(3, 3, 0.12).unwrap();
        let w = window(&[2.0, 2.0, 2.0]);
        assert_eq!(rebate(&w, false, 1.0, &p).unwrap(), 0.0);
        assert_eq!(rebate(&w, true, 2.5, &p).unwrap(), 0.0);
        assert!((rebate(&w, true, 1.0, &p).unwrap() - 0.12).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let r = rebate(&w, true, 0.2 * k as f64, &p).unwrap();
            assert!(r >= 0.0 && r <= last);
            last = r;
        }
    }

    #[test]
    fn payoff_cases() {
        let pr = params();
        let prog = DrProgram::high(2, 3, 0.12).unwrap();
        let a_b = pr.intrinsic_baseline(1.0).unwrap();
        let s = State::new(window(&[3.0, 1.0, 2.0]), false, 1.0).unwrap();
        assert_eq!(immediate_payoff(&s, a_b, &prog, &pr).unwrap(), pr.net_utility(a_b, 1.0).unwrap());
        let s = State::new(window(&[3.0, 1.0, 2.0]), true, 1.0).unwrap();
        let b = prog.baseline(s.window.values()).unwrap();
        assert_eq!(immediate_payoff(&s, b, &prog, &pr).unwrap(), pr.net_utility(b, 1.0).unwrap());
        let free = prog.with_rebate(0.0).unwrap();
        assert_eq!(immediate_payoff(&s, 1.0, &free, &pr).unwrap(), pr.net_utility(1.0, 1.0).unwrap());
    }

    #[test]
    fn chain_probabilities() {
        let c = DrChain::default();
        assert_eq!(c.prob(false, true), 0.2);
        assert_eq!(c.prob(true, true), 0.4);
        assert_eq!(c.prob(false, false), 0.8);
        for y in [false, true] {
            assert!((c.prob(y, false) + c.prob(y, true) - 1.0).abs() < 1e-15);
        }
        // Stationary equations: pi1 = pi0 p0 + pi1 p1, pi0 + pi1 = 1.
        let pi1 = c.stationary_dr_fraction().unwrap();
        assert!((pi1 - ((1.0 - pi1) * 0.2 + pi1 * 0.4)).abs() < 1e-15);
        assert!((pi1 - 0.25).abs() < 1e-15);
        assert!(DrChain::new(1.1, 0.0).is_err());
    }

    #[test]
    fn z_distribution_validation() {
        assert!(ZDistribution::new(vec![1.0, 0.5], vec![0.5, 0.5]).is_err());
        assert!(ZDistribution::new(vec![1.0], vec![0.9]).is_err());
        assert!(ZDistribution::new(vec![0.0], vec![1.0]).is_err());
        let z = ZDistribution::default();
        assert_eq!(z.index_of(1.2), Some(2));
        assert_eq!(z.index_of(1.1), None);
    }
}
