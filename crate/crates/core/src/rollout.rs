//! Rollout: a linear heuristic for non-DR days, Monte-Carlo fitting of its
//! slope, and one-step lookahead on top of it.
//!
//! All Monte-Carlo estimates use common random numbers. The futures sampled
//! for a decision at `(path, t)` depend only on the master seed, the path and
//! the day, so every candidate action is scored on the same futures and a
//! rerun reproduces every action.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::ActionGrid;
use crate::error::{Error, Result};
use crate::mdp::{immediate_payoff, transition_window, Model, Policy, State, Step};
use crate::rng::{stream_rng, STREAM_FIT, STREAM_ROLLOUT};
use crate::scenario::ScenarioPath;
use crate::utility::DayOptima;

const MODULE: &str = "rollout";

/// Summary of the window that scales the non-DR overconsumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    #[default]
    WindowMax,
    WindowMean,
}

impl Feature {
    pub fn eval(&self, window: &[f64]) -> f64 {
        match self {
            Feature::WindowMax => window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Feature::WindowMean => window.iter().sum::<f64>() / window.len() as f64,
        }
    }
}

/// `a = clamp(a^B(z) + theta_t * phi(window), 0, a_hat)` on non-DR days, the
/// threshold rule on DR days. The slope is either one value for every day
/// or a per-day schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHeuristic {
    theta: f64,
    schedule: Option<Vec<f64>>,
    feature: Feature,
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::param(MODULE, format!("theta must lie in [0, 1], got {theta}")));
    }
    Ok(())
}

impl LinearHeuristic {
    pub fn new(theta: f64, feature: Feature) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { theta, schedule: None, feature })
    }

    /// Slope `thetas[t]` on day `t`.
    pub fn staged(thetas: Vec<f64>, feature: Feature) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::param(MODULE, "theta schedule is empty"));
        }
        thetas.iter().try_for_each(|t| check_theta(*t))?;
        Ok(Self { theta: thetas[0], schedule: Some(thetas), feature })
    }

    /// The stationary slope, or the first day's slope of a schedule.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn schedule(&self) -> Option<&[f64]> {
        self.schedule.as_deref()
    }

    /// Slope on day `t`; days past the end of a schedule reuse its last slope.
    pub fn theta_at(&self, t: usize) -> f64 {
        match &self.schedule {
            Some(s) => s[t.min(s.len() - 1)],
            None => self.theta,
        }
    }

    pub fn feature(&self) -> Feature {
        self.feature
    }
}

/// Heuristic consumption on day `t`.
pub fn heuristic_action(t: usize, state: &State, h: &LinearHeuristic, model: &Model) -> Result<f64> {
    let params = &model.params;
    let z = state.z();
    if state.dr {
        let b = model.program.baseline(state.window.values())?;
        return params.dr_day_policy(b, z, model.program.rebate());
    }
    let a_b = params.intrinsic_baseline(z)?;
    Ok((a_b + h.theta_at(t) * h.feature.eval(state.window.values())).clamp(0.0, params.a_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Paths on which each theta candidate is scored.
    pub n_fit_paths: usize,
    /// Futures sampled per rollout decision.
    pub n_eval_paths: usize,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { n_fit_paths: 10, n_eval_paths: 1000, seed: 0 }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fit_paths == 0 || self.n_eval_paths == 0 {
            return Err(Error::param(MODULE, "path counts must be at least 1"));
        }
        Ok(())
    }
}

/// `0, 0.001, ..., 1`.
pub fn default_theta_grid() -> Vec<f64> {
    (0..=1000).map(|i| i as f64 / 1000.0).collect()
}

/// Per-z quantities the simulator reuses on every day.
struct DayTable {
    optima: Vec<DayOptima>,
}

impl DayTable {
    fn new(model: &Model) -> Result<Self> {
        let r = model.program.rebate();
        let optima = model.z.values().iter().map(|z| model.params.day_optima(*z, r)).collect::<Result<_>>()?;
        Ok(Self { optima })
    }
}

/// Sampled DR flags and z indices of the days after a decision.
struct Future {
    dr: Vec<bool>,
    z: Vec<u8>,
}

fn sample_future<R: Rng>(model: &Model, y_now: bool, days: usize, rng: &mut R) -> Future {
    let mut dr = Vec::with_capacity(days);
    let mut z = Vec::with_capacity(days);
    let mut y = y_now;
    for _ in 0..days {
        y = model.chain.sample_next(y, rng);
        dr.push(y);
        z.push(model.z.sample_index(rng) as u8);
    }
    Future { dr, z }
}

/// Total heuristic payoff along `future`, whose first day is `first_day`,
/// starting from `window`, which is overwritten with the final window.
fn heuristic_payoff(
    model: &Model,
    table: &DayTable,
    h: &LinearHeuristic,
    first_day: usize,
    window: &mut [f64],
    future: &Future,
) -> Result<f64> {
    let params = &model.params;
    let r = model.program.rebate();
    let mut total = 0.0;
    for (i, (dr, k)) in future.dr.iter().zip(&future.z).enumerate() {
        let k = *k as usize;
        let z = model.z.values()[k];
        let opt = &table.optima[k];
        if *dr {
            let b = model.program.baseline(window)?;
            let a = opt.dr_action(b);
            total += params.net(a, z) + r * (b - a).max(0.0);
        } else {
            let a = (opt.intrinsic + h.theta_at(first_day + i) * h.feature.eval(window)).clamp(0.0, params.a_hat);
            total += params.net(a, z);
            window.copy_within(0..window.len() - 1, 1);
            window[0] = a;
        }
    }
    Ok(total)
}

fn check_fit_args(model: &Model, t0: usize, config: &RolloutConfig, theta_grid: &[f64]) -> Result<()> {
    config.validate()?;
    if theta_grid.is_empty() {
        return Err(Error::param(MODULE, "theta grid is empty"));
    }
    let days = model.horizon.days();
    if t0 >= days {
        return Err(Error::param(MODULE, format!("start day {t0} outside horizon of {days} days")));
    }
    Ok(())
}

fn fit_futures(model: &Model, start: &State, t0: usize, config: &RolloutConfig) -> Vec<Future> {
    let days = model.horizon.days();
    (0..config.n_fit_paths)
        .map(|p| {
            let mut rng = stream_rng(config.seed, STREAM_FIT, &[p as u64, t0 as u64]);
            sample_future(model, start.dr, days - t0 - 1, &mut rng)
        })
        .collect()
}

/// Mean payoff of `h` from `start` on day `t0` over `futures`.
fn mean_payoff(model: &Model, table: &DayTable, h: &LinearHeuristic, start: &State, t0: usize, futures: &[Future]) -> Result<f64> {
    let first = heuristic_action(t0, start, h, model)?;
    let g0 = immediate_payoff(start, first, &model.program, &model.params)?;
    let next = transition_window(start, first, model.params.a_hat)?;
    let mut sum = 0.0;
    let mut window = next.values().to_vec();
    for f in futures {
        window.copy_from_slice(next.values());
        sum += g0 + heuristic_payoff(model, table, h, t0 + 1, &mut window, f)?;
    }
    Ok(sum / futures.len() as f64)
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] + 1e-12 {
            best = i;
        }
    }
    best
}

/// Slope maximizing the mean heuristic payoff over `n_fit_paths` futures
/// from `start` at day `t0`; the smallest slope wins ties.
pub fn fit_theta(model: &Model, start: &State, t0: usize, feature: Feature, config: &RolloutConfig, theta_grid: &[f64]) -> Result<f64> {
    check_fit_args(model, t0, config, theta_grid)?;
    let table = DayTable::new(model)?;
    let futures = fit_futures(model, start, t0, config);
    let scores: Vec<f64> = theta_grid
        .par_iter()
        .map(|theta| mean_payoff(model, &table, &LinearHeuristic::new(*theta, feature)?, start, t0, &futures))
        .collect::<Result<_>>()?;
    Ok(theta_grid[argmax_first(&scores)])
}

/// One slope per day, fitted backward from the last day: `theta_t` maximizes
/// the mean payoff from `start` placed at day `t` with the later slopes
/// already fixed. Ties go to the smallest slope.
pub fn fit_theta_schedule(model: &Model, start: &State, feature: Feature, config: &RolloutConfig, theta_grid: &[f64]) -> Result<Vec<f64>> {
    check_fit_args(model, 0, config, theta_grid)?;
    let table = DayTable::new(model)?;
    let days = model.horizon.days();
    let mut schedule = vec![theta_grid[0]; days];
    for t in (0..days).rev() {
        let futures = fit_futures(model, start, t, config);
        let scores: Vec<f64> = theta_grid
            .par_iter()
            .map(|theta| {
                let mut s = schedule.clone();
                s[t] = *theta;
                mean_payoff(model, &table, &LinearHeuristic::staged(s, feature)?, start, t, &futures)
            })
            .collect::<Result<_>>()?;
        schedule[t] = theta_grid[argmax_first(&scores)];
    }
    Ok(schedule)
}

/// The heuristic as a [`Policy`].
#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    pub model: Model,
    pub heuristic: LinearHeuristic,
}

impl Policy for HeuristicPolicy {
    fn action(&self, step: Step, state: &State) -> Result<f64> {
        heuristic_action(step.t, state, &self.heuristic, &self.model)
    }
}

/// One-step lookahead on the heuristic.
///
/// Non-DR candidates are the action grid plus the heuristic's own action and
/// the intrinsic baseline. On DR days the window is frozen, so the
/// continuation does not depend on the action and the threshold rule is
/// returned directly.
pub struct RolloutPolicy {
    model: Model,
    heuristic: LinearHeuristic,
    config: RolloutConfig,
    grid: ActionGrid,
    table: DayTable,
}

impl std::fmt::Debug for RolloutPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RolloutPolicy")
            .field("heuristic", &self.heuristic)
            .field("config", &self.config)
            .field("grid", &self.grid)
            .finish()
    }
}

impl RolloutPolicy {
    pub fn new(model: Model, heuristic: LinearHeuristic, config: RolloutConfig, grid: ActionGrid) -> Result<Self> {
        config.validate()?;
        if (grid.upper() - model.params.a_hat).abs() > 1e-9 * model.params.a_hat.max(1.0) {
            return Err(Error::param(MODULE, "action grid must end at the consumption cap"));
        }
        let table = DayTable::new(&model)?;
        Ok(Self { model, heuristic, config, grid, table })
    }

    pub fn heuristic(&self) -> &LinearHeuristic {
        &self.heuristic
    }

    /// Estimated `g_t(s, a) + E[heuristic payoff-to-go]` of every candidate.
    pub fn scores(&self, step: Step, state: &State) -> Result<Vec<(f64, f64)>> {
        let model = &self.model;
        let days = model.horizon.days();
        if step.t >= days {
            return Err(Error::param(MODULE, format!("day {} outside horizon of {days} days", step.t)));
        }
        let mut candidates: Vec<f64> = self.grid.points().to_vec();
        candidates.push(heuristic_action(step.t, state, &self.heuristic, model)?);
        candidates.push(model.params.intrinsic_baseline(state.z())?);
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();

        let remaining = days - step.t - 1;
        let futures: Vec<Future> = if remaining == 0 {
            Vec::new()
        } else {
            let mut rng = stream_rng(self.config.seed, STREAM_ROLLOUT, &[step.path, step.t as u64]);
            (0..self.config.n_eval_paths)
                .map(|_| sample_future(model, state.dr, remaining, &mut rng))
                .collect()
        };
        let mut window = state.window.values().to_vec();
        candidates
            .into_iter()
            .map(|a| {
                let g = immediate_payoff(state, a, &model.program, &model.params)?;
                if futures.is_empty() {
                    return Ok((a, g));
                }
                let next = transition_window(state, a, model.params.a_hat)?;
                let mut sum = 0.0;
                for f in &futures {
                    window.copy_from_slice(next.values());
                    sum += heuristic_payoff(model, &self.table, &self.heuristic, step.t + 1, &mut window, f)?;
                }
                Ok((a, g + sum / futures.len() as f64))
            })
            .collect()
    }

    pub fn rollout_action(&self, step: Step, state: &State) -> Result<f64> {
        if state.dr {
            let b = self.model.program.baseline(state.window.values())?;
            return self.model.params.dr_day_policy(b, state.z(), self.model.program.rebate());
        }
        let scores = self.scores(step, state)?;
        let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        Ok(scores.iter().find(|s| s.1 >= max - 1e-12).map(|s| s.0).unwrap_or(0.0))
    }
}

impl Policy for RolloutPolicy {
    fn action(&self, step: Step, state: &State) -> Result<f64> {
        self.rollout_action(step, state)
    }
}

/// Realized trajectory of a policy along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOutcome {
    pub actions: Vec<f64>,
    /// Baseline on each DR day, `None` on non-DR days.
    pub baselines: Vec<Option<f64>>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub outcomes: Vec<PathOutcome>,
    pub mean: f64,
    pub std_error: f64,
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn simulate_path<P: Policy + ?Sized>(
    policy: &P,
    path_id: u64,
    path: &ScenarioPath,
    model: &Model,
    initial_window: &crate::baseline::ConsumptionWindow,
) -> Result<PathOutcome> {
    let days = path.days();
    if days != model.horizon.days() {
        return Err(Error::data(
            MODULE,
            format!("path {path_id} has {days} days but the horizon is {}", model.horizon.days()),
        ));
    }
    if initial_window.len() != model.program.y() {
        return Err(Error::param(MODULE, "initial window length must equal Y"));
    }
    let mut window = initial_window.clone();
    let mut out = PathOutcome { actions: Vec::with_capacity(days), baselines: Vec::with_capacity(days), total: 0.0 };
    for t in 0..days {
        let state = State::new(window, path.dr_flags[t], path.z_values[t])?;
        let a = policy.action(Step { path: path_id, t }, &state)?;
        out.total += immediate_payoff(&state, a, &model.program, &model.params)?;
        out.baselines.push(if state.dr { Some(model.program.baseline(state.window.values())?) } else { None });
        out.actions.push(a);
        window = transition_window(&state, a, model.params.a_hat)?;
    }
    Ok(out)
}

/// Runs `policy` along every path; path `i` is simulated with path id `i`.
pub fn simulate_policy<P: Policy + ?Sized>(
    policy: &P,
    paths: &[ScenarioPath],
    model: &Model,
    initial_window: &crate::baseline::ConsumptionWindow,
) -> Result<SimulationSummary> {
    let outcomes: Vec<PathOutcome> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| simulate_path(policy, i as u64, p, model, initial_window))
        .collect::<Result<_>>()?;
    let totals: Vec<f64> = outcomes.iter().map(|o| o.total).collect();
    let (mean, std_error) = mean_and_se(&totals);
    Ok(SimulationSummary { outcomes, mean, std_error })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementReport {
    /// Rollout minus heuristic total payoff, per path.
    pub differences: Vec<f64>,
    pub mean_difference: f64,
    pub std_error: f64,
    pub heuristic_mean: f64,
    pub rollout_mean: f64,
    pub passed: bool,
}

impl std::fmt::Display for ImprovementReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] rollout - heuristic = {:.5} +/- {:.5} over {} paths (heuristic {:.4}, rollout {:.4})",
            if self.passed { "PASS" } else { "FAIL" },
            self.mean_difference,
            self.std_error,
            self.differences.len(),
            self.heuristic_mean,
            self.rollout_mean
        )
    }
}

/// Paired comparison of the rollout policy against its heuristic on the
/// same paths. Passes when the mean improvement is at least minus two
/// standard errors.
pub fn verify_improvement(
    rollout: &RolloutPolicy,
    paths: &[ScenarioPath],
    initial_window: &crate::baseline::ConsumptionWindow,
) -> Result<ImprovementReport> {
    let model = &rollout.model;
    let heuristic = HeuristicPolicy { model: model.clone(), heuristic: rollout.heuristic.clone() };
    let base = simulate_policy(&heuristic, paths, model, initial_window)?;
    let roll = simulate_policy(rollout, paths, model, initial_window)?;
    let differences: Vec<f64> = roll.outcomes.iter().zip(&base.outcomes).map(|(r, h)| r.total - h.total).collect();
    let (mean_difference, std_error) = mean_and_se(&differences);
    Ok(ImprovementReport {
        passed: mean_difference >= -2.0 * std_error - 1e-9,
        differences,
        mean_difference,
        std_error,
        heuristic_mean: base.mean,
        rollout_mean: roll.mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{ConsumptionWindow, DrProgram};
    use crate::mdp::{DrChain, Horizon, IntrinsicPolicy, ZDistribution};
    use crate::scenario::model_paths;
    use crate::utility::UtilityParams;

    fn model(y: usize, x: usize, r: f64, days: usize) -> Model {
        Model {
            horizon: Horizon::new(days).unwrap(),
            program: DrProgram::high(x, y, r).unwrap(),
            params: UtilityParams::new(1.56, 1.25, 0.12, 10.77, 0.99).unwrap(),
            chain: DrChain::default(),
            z: ZDistribution::default(),
        }
    }

    fn small_config() -> RolloutConfig {
        RolloutConfig { n_fit_paths: 10, n_eval_paths: 40, seed: 11 }
    }

    #[test]
    fn heuristic_cases() {
        let m = model(3, 1, 0.12, 10);
        let w = ConsumptionWindow::new(vec![2.0, 1.0, 1.0]).unwrap();
        let nd = State::new(w.clone(), false, 1.0).unwrap();
        let a_b = m.params.intrinsic_baseline(1.0).unwrap();
        let h0 = LinearHeuristic::new(0.0, Feature::WindowMax).unwrap();
        assert_eq!(heuristic_action(0, &nd, &h0, &m).unwrap(), a_b);
        let h = LinearHeuristic::new(0.148, Feature::WindowMax).unwrap();
        let a = heuristic_action(0, &nd, &h, &m).unwrap();
        assert!((a - (a_b + 0.296)).abs() < 1e-12);
        assert!((a - 3.26).abs() < 0.01, "{a}");

        let dr = State::new(w, true, 1.0).unwrap();
        let closed = m.params.dr_day_policy(2.0, 1.0, 0.12).unwrap();
        assert_eq!(heuristic_action(0, &dr, &h0, &m).unwrap(), closed);
        assert_eq!(heuristic_action(0, &dr, &h, &m).unwrap(), closed);
        assert!(LinearHeuristic::new(1.5, Feature::WindowMax).is_err());
    }

    #[test]
    fn fit_theta_cases() {
        let start = State::new(ConsumptionWindow::constant(2.96, 3).unwrap(), false, 1.0).unwrap();
        let cfg = small_config();
        let grid = default_theta_grid();
        let m0 = model(3, 1, 0.0, 30);
        assert_eq!(fit_theta(&m0, &start, 0, Feature::WindowMax, &cfg, &grid).unwrap(), 0.0);
        let m = model(3, 1, 0.12, 30);
        assert_eq!(fit_theta(&m, &start, 0, Feature::WindowMax, &cfg, &[0.3]).unwrap(), 0.3);
        assert!(fit_theta(&m, &start, 0, Feature::WindowMax, &cfg, &[]).is_err());
        let a = fit_theta(&m, &start, 0, Feature::WindowMax, &cfg, &grid).unwrap();
        let b = fit_theta(&m, &start, 0, Feature::WindowMax, &cfg, &grid).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0 && a < 1.0, "{a}");
    }

    #[test]
    fn staged_heuristic_cases() {
        let m = model(3, 1, 0.12, 20);
        let start = State::new(ConsumptionWindow::constant(2.96, 3).unwrap(), false, 1.0).unwrap();
        let flat = LinearHeuristic::staged(vec![0.1; 20], Feature::WindowMax).unwrap();
        let one = LinearHeuristic::new(0.1, Feature::WindowMax).unwrap();
        for t in [0, 7, 19, 40] {
            assert_eq!(heuristic_action(t, &start, &flat, &m).unwrap(), heuristic_action(t, &start, &one, &m).unwrap());
        }
        assert!(LinearHeuristic::staged(vec![], Feature::WindowMax).is_err());
        assert!(LinearHeuristic::staged(vec![0.1, 2.0], Feature::WindowMax).is_err());

        let cfg = small_config();
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 100.0).collect();
        let s = fit_theta_schedule(&m, &start, Feature::WindowMax, &cfg, &grid).unwrap();
        assert_eq!(s.len(), 20);
        // Overconsuming on the last day cannot pay off.
        assert_eq!(s[19], 0.0);
        assert!(s[0] > 0.0, "{s:?}");
        assert_eq!(s, fit_theta_schedule(&m, &start, Feature::WindowMax, &cfg, &grid).unwrap());
        let m0 = model(3, 1, 0.0, 20);
        assert!(fit_theta_schedule(&m0, &start, Feature::WindowMax, &cfg, &grid).unwrap().iter().all(|t| *t == 0.0));
    }

    #[test]
    fn rollout_action_cases() {
        let m = model(3, 1, 0.12, 10);
        let grid = ActionGrid::uniform(m.params.a_hat, 10).unwrap();
        let h = LinearHeuristic::new(0.1, Feature::WindowMax).unwrap();
        let pol = RolloutPolicy::new(m.clone(), h, small_config(), grid.clone()).unwrap();
        let w = ConsumptionWindow::new(vec![3.0, 2.0, 4.0]).unwrap();

        let last = State::new(w.clone(), false, 1.2).unwrap();
        let a = pol.rollout_action(Step { path: 0, t: 9 }, &last).unwrap();
        assert_eq!(a, m.params.intrinsic_baseline(1.2).unwrap());

        for z in [0.8, 1.0, 1.2] {
            let dr = State::new(w.clone(), true, z).unwrap();
            let a = pol.rollout_action(Step { path: 0, t: 2 }, &dr).unwrap();
            let closed = m.params.dr_day_policy(4.0, z, 0.12).unwrap();
            assert!((a - closed).abs() <= grid.step());
        }

        let s = State::new(w.clone(), false, 1.0).unwrap();
        let step = Step { path: 3, t: 4 };
        assert_eq!(pol.rollout_action(step, &s).unwrap(), pol.rollout_action(step, &s).unwrap());

        let m0 = model(3, 1, 0.0, 10);
        let h0 = LinearHeuristic::new(0.0, Feature::WindowMax).unwrap();
        let pol0 = RolloutPolicy::new(m0.clone(), h0, small_config(), grid).unwrap();
        for t in 0..10 {
            for dr in [false, true] {
                let s = State::new(w.clone(), dr, 0.8).unwrap();
                assert_eq!(pol0.rollout_action(Step { path: 0, t }, &s).unwrap(), m0.params.intrinsic_baseline(0.8).unwrap());
            }
        }
    }

    #[test]
    fn simulation_cases() {
        let m = model(3, 1, 0.12, 15);
        let w0 = ConsumptionWindow::constant(2.96, 3).unwrap();
        let paths = model_paths(&m, 6, 2, false).unwrap();

        struct Zero;
        impl Policy for Zero {
            fn action(&self, _: Step, _: &State) -> Result<f64> {
                Ok(0.0)
            }
        }
        let no_dr: Vec<ScenarioPath> = paths
            .iter()
            .map(|p| ScenarioPath::new(p.consumption.clone(), vec![false; 15], p.z_values.clone()).unwrap())
            .collect();
        assert_eq!(simulate_policy(&Zero, &no_dr, &m, &w0).unwrap().mean, 0.0);

        let m0 = model(3, 1, 0.0, 15);
        let intrinsic = IntrinsicPolicy { params: m0.params };
        let sim = simulate_policy(&intrinsic, &paths, &m0, &w0).unwrap();
        let want: f64 = paths
            .iter()
            .map(|p| p.z_values.iter().map(|z| m0.params.net_utility(m0.params.intrinsic_baseline(*z).unwrap(), *z).unwrap()).sum::<f64>())
            .sum::<f64>()
            / 6.0;
        assert!((sim.mean - want).abs() < 1e-9);

        let short = model(3, 1, 0.12, 14);
        assert!(simulate_policy(&intrinsic, &paths, &short, &w0).is_err());
    }

    #[test]
    fn improvement_holds_and_ties_at_zero_rebate() {
        let w0 = ConsumptionWindow::constant(2.96, 3).unwrap();
        let grid_for = |m: &Model| ActionGrid::uniform(m.params.a_hat, 10).unwrap();

        let m0 = model(3, 1, 0.0, 20);
        let paths = model_paths(&m0, 8, 5, false).unwrap();
        let h0 = LinearHeuristic::new(0.0, Feature::WindowMax).unwrap();
        let pol = RolloutPolicy::new(m0.clone(), h0, small_config(), grid_for(&m0)).unwrap();
        let rep = verify_improvement(&pol, &paths, &w0).unwrap();
        assert!(rep.differences.iter().all(|d| *d == 0.0), "{rep}");

        let m = model(3, 1, 0.12, 20);
        let start = State::new(w0.clone(), false, 1.0).unwrap();
        let theta = fit_theta(&m, &start, 0, Feature::WindowMax, &small_config(), &default_theta_grid()).unwrap();
        let h = LinearHeuristic::new(theta, Feature::WindowMax).unwrap();
        let pol = RolloutPolicy::new(m.clone(), h, small_config(), grid_for(&m)).unwrap();
        let paths = model_paths(&m, 8, 5, false).unwrap();
        let rep = verify_improvement(&pol, &paths, &w0).unwrap();
        assert!(rep.passed, "{rep}");
    }
}
