//! Exact backward induction over the action-grid lattice.
//!
//! Windows are snapped to the action grid, so after any number of non-DR
//! days every window is a point of the lattice `grid^Y`. A window is encoded
//! as a mixed-radix integer with the most recent day as the lowest digit,
//! which turns the non-DR shift into `a + G * (x mod G^(Y-1))`.
//!
//! Two facts keep the tables small:
//!
//! * On a DR day the window is frozen, so the continuation value does not
//!   depend on the action and the DR-day argmax is stage independent.
//! * On a non-DR day the oldest entry of the window leaves the state, so the
//!   policy depends only on the newest `Y-1` entries.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baseline::{BaselineMethod, ConsumptionWindow};
use crate::check::CheckReport;
use crate::error::{Error, Result};
use crate::mdp::{Model, Policy, State, Step};

const MODULE: &str = "dp";

/// Maximizers within this distance of the maximum are ties; the smallest
/// action among them is chosen.
pub const TIE_TOL: f64 = 1e-12;

/// Ordered consumption levels spanning `[0, a_hat]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    points: Vec<f64>,
}

impl ActionGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() > 255 {
            return Err(Error::param(MODULE, format!("action grid needs 2..=255 points, got {}", points.len())));
        }
        if points[0] != 0.0 {
            return Err(Error::param(MODULE, "action grid must start at 0"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::param(MODULE, "action grid must be finite and strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `n` evenly spaced points from 0 to `a_hat` inclusive.
    pub fn uniform(a_hat: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(MODULE, "action grid needs at least 2 points"));
        }
        let step = a_hat / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
        points[n - 1] = a_hat;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Largest gap between neighbouring points.
    pub fn step(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn index_of(&self, v: f64) -> Option<usize> {
        let tol = 1e-9 * v.abs().max(1.0);
        let i = self.points.partition_point(|p| *p < v - tol);
        (i < self.points.len() && (self.points[i] - v).abs() <= tol).then_some(i)
    }

    pub fn nearest_index(&self, v: f64) -> usize {
        let i = self.points.partition_point(|p| *p < v);
        if i == 0 {
            0
        } else if i == self.points.len() || v - self.points[i - 1] <= self.points[i] - v {
            i - 1
        } else {
            i
        }
    }

    pub fn snap(&self, v: f64) -> f64 {
        self.points[self.nearest_index(v)]
    }

    pub fn snap_window(&self, w: &ConsumptionWindow) -> Result<ConsumptionWindow> {
        ConsumptionWindow::new(w.values().iter().map(|v| self.snap(*v)).collect())
    }
}

/// Mixed-radix encoding of grid windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    base: usize,
    len: usize,
    windows: usize,
    prefixes: usize,
}

impl Lattice {
    pub fn new(base: usize, len: usize) -> Result<Self> {
        let prefixes = base.checked_pow(len as u32 - 1);
        let windows = base.checked_pow(len as u32);
        match (windows, prefixes) {
            (Some(windows), Some(prefixes)) if len >= 1 => Ok(Self { base, len, windows, prefixes }),
            _ => Err(Error::resource(MODULE, format!("lattice {base}^{len} overflows the index type"))),
        }
    }

    pub fn windows(&self) -> usize {
        self.windows
    }

    pub fn prefixes(&self) -> usize {
        self.prefixes
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        digits.iter().rev().fold(0, |acc, d| acc * self.base + d)
    }

    pub fn decode_into(&self, mut idx: usize, out: &mut [usize]) {
        for d in out.iter_mut().take(self.len) {
            *d = idx % self.base;
            idx /= self.base;
        }
    }

    pub fn decode(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.len];
        self.decode_into(idx, &mut out);
        out
    }

    /// Window after a non-DR day with action index `a`.
    #[inline]
    pub fn shift(&self, idx: usize, a: usize) -> usize {
        a + self.base * (idx % self.prefixes)
    }

    #[inline]
    pub fn prefix(&self, idx: usize) -> usize {
        idx % self.prefixes
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Retain `V_t(s)` for every stage and state.
    pub keep_values: bool,
    pub memory_budget_bytes: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { keep_values: false, memory_budget_bytes: 2 << 30 }
    }
}

/// Bytes needed by [`solve`]; `None` if the count overflows.
pub fn estimate_memory(grid_len: usize, y: usize, nz: usize, days: usize, keep_values: bool) -> Option<u64> {
    let windows = (grid_len as u64).checked_pow(y as u32)?;
    let prefixes = windows / grid_len as u64;
    let nz = nz as u64;
    let days = days as u64;
    let mut bytes = windows.checked_mul(8 * 5)?; // continuation values and expected DR values
    bytes = bytes.checked_add(windows.checked_mul(nz)?)?; // DR policy
    bytes = bytes.checked_add(prefixes.checked_mul(nz)?.checked_mul(days + 8)?)?;
    if keep_values {
        bytes = bytes.checked_add(windows.checked_mul(nz * 8)?)?;
        bytes = bytes.checked_add(windows.checked_mul(days)?.checked_mul(2 * nz * 8)?)?;
    }
    Some(bytes)
}

/// Lattice, grid and model shared by the policy and value tables.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub model: Model,
    pub grid: ActionGrid,
    pub lattice: Lattice,
}

impl StateSpace {
    fn window_index(&self, window: &ConsumptionWindow) -> Result<usize> {
        if window.len() != self.lattice.len {
            return Err(Error::lookup(
                MODULE,
                format!("window length {} differs from Y={}", window.len(), self.lattice.len),
            ));
        }
        let mut digits = Vec::with_capacity(window.len());
        for v in window.values() {
            let i = self
                .grid
                .index_of(*v)
                .ok_or_else(|| Error::lookup(MODULE, format!("window value {v} is not on the action grid")))?;
            digits.push(i);
        }
        Ok(self.lattice.encode(&digits))
    }

    fn z_index(&self, z: f64) -> Result<usize> {
        self.model
            .z
            .index_of(z)
            .ok_or_else(|| Error::lookup(MODULE, format!("z={z} is not in the z support")))
    }

    fn check_stage(&self, t: usize, allow_terminal: bool) -> Result<()> {
        let days = self.model.horizon.days();
        if t > days || (t == days && !allow_terminal) {
            return Err(Error::lookup(MODULE, format!("stage {t} outside horizon of {days} days")));
        }
        Ok(())
    }

    pub fn window_values(&self, idx: usize) -> Vec<f64> {
        self.lattice.decode(idx).into_iter().map(|d| self.grid.points[d]).collect()
    }

    pub fn window(&self, idx: usize) -> ConsumptionWindow {
        ConsumptionWindow::new(self.window_values(idx)).expect("grid windows are valid")
    }
}

/// Optimal action for every stage and lattice state.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    space: StateSpace,
    /// `[t][prefix][z]`
    non_dr: Vec<u8>,
    /// `[window][z]`, identical at every stage.
    dr: Vec<u8>,
}

impl PolicyTable {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn action_index(&self, t: usize, window: usize, dr: bool, z: usize) -> usize {
        let nz = self.space.model.z.len();
        if dr {
            self.dr[window * nz + z] as usize
        } else {
            let p = self.space.lattice.prefix(window);
            self.non_dr[(t * self.space.lattice.prefixes + p) * nz + z] as usize
        }
    }

    /// Optimal action at `(t, state)`; the state must lie on the lattice.
    pub fn policy_at(&self, t: usize, state: &State) -> Result<f64> {
        self.space.check_stage(t, false)?;
        let w = self.space.window_index(&state.window)?;
        let z = self.space.z_index(state.z())?;
        Ok(self.space.grid.points[self.action_index(t, w, state.dr, z)])
    }
}

impl Policy for PolicyTable {
    fn action(&self, step: Step, state: &State) -> Result<f64> {
        self.policy_at(step.t, state)
    }
}

/// Optimal values. Always holds the start-state values; holds every stage
/// when solved with [`SolveOptions::keep_values`].
#[derive(Debug, Clone)]
pub struct ValueTable {
    space: StateSpace,
    initial_window: ConsumptionWindow,
    /// `[y][z]` at stage 0 for the initial window.
    initial: Vec<f64>,
    /// `[t][window][y][z]`
    all: Option<Vec<f64>>,
}

impl ValueTable {
    pub fn initial_window(&self) -> &ConsumptionWindow {
        &self.initial_window
    }

    /// `V_0` at the initial window.
    pub fn initial_value(&self, dr: bool, z: f64) -> Result<f64> {
        let zi = self.space.z_index(z)?;
        Ok(self.initial[dr as usize * self.space.model.z.len() + zi])
    }

    pub fn has_all_stages(&self) -> bool {
        self.all.is_some()
    }

    pub fn value_index(&self, t: usize, window: usize, dr: bool, z: usize) -> Option<f64> {
        let days = self.space.model.horizon.days();
        if t == days {
            return Some(0.0);
        }
        let nz = self.space.model.z.len();
        let all = self.all.as_ref()?;
        Some(all[((t * self.space.lattice.windows + window) * 2 + dr as usize) * nz + z])
    }

    pub fn value_at(&self, t: usize, state: &State) -> Result<f64> {
        self.space.check_stage(t, true)?;
        let w = self.space.window_index(&state.window)?;
        let z = self.space.z_index(state.z())?;
        if t == 0 && w == self.space.window_index(&self.initial_window)? {
            return Ok(self.initial[state.dr as usize * self.space.model.z.len() + z]);
        }
        self.value_index(t, w, state.dr, z)
            .ok_or_else(|| Error::lookup(MODULE, "values were not retained; solve with keep_values"))
    }
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub policy: PolicyTable,
    pub values: ValueTable,
}

impl DpSolution {
    pub fn space(&self) -> &StateSpace {
        &self.policy.space
    }

    pub fn policy_at(&self, t: usize, state: &State) -> Result<f64> {
        self.policy.policy_at(t, state)
    }

    pub fn value_at(&self, t: usize, state: &State) -> Result<f64> {
        self.values.value_at(t, state)
    }
}

impl Policy for DpSolution {
    fn action(&self, step: Step, state: &State) -> Result<f64> {
        self.policy.policy_at(step.t, state)
    }
}

/// Index and value of the maximum; ties within [`TIE_TOL`] go to the
/// smallest index.
#[inline]
fn argmax_smallest(values: &[f64]) -> (usize, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let idx = values.iter().position(|v| *v >= max - TIE_TOL).unwrap_or(0);
    (idx, max)
}

/// Baseline of every lattice window, evaluated once per multiset of entries.
fn lattice_baselines(space: &StateSpace) -> Result<Vec<f64>> {
    use std::collections::HashMap;
    let lat = space.lattice;
    let program = space.model.program;
    let mut memo: HashMap<Vec<u8>, f64> = HashMap::new();
    let mut digits = vec![0usize; lat.len];
    let mut values = vec![0.0; lat.len];
    let mut out = Vec::with_capacity(lat.windows);
    for idx in 0..lat.windows {
        lat.decode_into(idx, &mut digits);
        let mut key: Vec<u8> = digits.iter().map(|d| *d as u8).collect();
        key.sort_unstable();
        let b = match memo.get(&key) {
            Some(b) => *b,
            None => {
                for (v, d) in values.iter_mut().zip(&key) {
                    *v = space.grid.points[*d as usize];
                }
                let b = program.baseline(&values)?;
                memo.insert(key, b);
                b
            }
        };
        out.push(b);
    }
    Ok(out)
}

/// Solves the Bellman recursion by backward induction.
///
/// The initial window is snapped to the grid. Values and policies cover the
/// whole lattice, which contains every state reachable from that window.
pub fn solve(model: &Model, grid: &ActionGrid, initial_window: &ConsumptionWindow, options: SolveOptions) -> Result<DpSolution> {
    let y = model.program.y();
    let nz = model.z.len();
    let days = model.horizon.days();
    let g = grid.len();
    if (grid.upper() - model.params.a_hat).abs() > 1e-9 * model.params.a_hat.max(1.0) {
        return Err(Error::param(
            MODULE,
            format!("action grid ends at {} but the consumption cap is {}", grid.upper(), model.params.a_hat),
        ));
    }
    if initial_window.len() != y {
        return Err(Error::param(MODULE, format!("initial window has {} values, Y={y}", initial_window.len())));
    }
    let needed = estimate_memory(g, y, nz, days, options.keep_values).unwrap_or(u64::MAX);
    if needed > options.memory_budget_bytes {
        return Err(Error::resource(
            MODULE,
            format!(
                "exact DP for Y={y} with {g} actions needs about {} MiB (budget {} MiB); use the rollout solver instead",
                needed >> 20,
                options.memory_budget_bytes >> 20
            ),
        ));
    }
    let lattice = Lattice::new(g, y)?;
    let space = StateSpace { model: model.clone(), grid: grid.clone(), lattice };
    let initial_window = grid.snap_window(initial_window)?;
    let x0 = space.window_index(&initial_window)?;

    let zs = model.z.values();
    let qs = model.z.probs();
    let r = model.program.rebate();
    let chain = model.chain;
    let pts = grid.points();
    // Net utility of each action under each z: pi[a * nz + k].
    let pi: Vec<f64> = (0..g)
        .flat_map(|a| zs.iter().map(move |z| (a, *z)))
        .map(|(a, z)| model.params.net(pts[a], z))
        .collect();

    let baselines = lattice_baselines(&space)?;
    let nw = lattice.windows;
    let np = lattice.prefixes;

    // DR days: stage-independent argmax of pi + r [B - a]_+.
    let mut dr_policy = vec![0u8; nw * nz];
    let mut dr_expected = vec![0.0; nw];
    let mut dr_values = if options.keep_values { vec![0.0; nw * nz] } else { Vec::new() };
    {
        let keep = options.keep_values;
        dr_policy
            .par_chunks_mut(nz)
            .zip(dr_expected.par_iter_mut())
            .enumerate()
            .for_each(|(x, (pol, exp))| {
                let b = baselines[x];
                let mut buf = [0.0; 256];
                let mut acc = 0.0;
                for k in 0..nz {
                    for a in 0..g {
                        buf[a] = pi[a * nz + k] + r * (b - pts[a]).max(0.0);
                    }
                    let (ia, v) = argmax_smallest(&buf[..g]);
                    pol[k] = ia as u8;
                    acc += qs[k] * v;
                }
                *exp = acc;
            });
        if keep {
            for x in 0..nw {
                for k in 0..nz {
                    let a = dr_policy[x * nz + k] as usize;
                    dr_values[x * nz + k] = pi[a * nz + k] + r * (baselines[x] - pts[a]).max(0.0);
                }
            }
        }
    }
    drop(baselines);

    let mut non_dr = vec![0u8; days * np * nz];
    let mut all = if options.keep_values { Some(vec![0.0; days * nw * 2 * nz]) } else { None };
    // cont[y_now][x] = E[V_{t+1}(x, y', z') | y_now]
    let mut cont0 = vec![0.0; nw];
    let mut cont1 = vec![0.0; nw];
    let mut next0 = vec![0.0; nw];
    let mut next1 = vec![0.0; nw];
    let mut nd_values = vec![0.0; np * nz];
    let mut e_nd = vec![0.0; np];
    let mut initial = vec![0.0; 2 * nz];

    let (p00, p01) = (chain.prob(false, false), chain.prob(false, true));
    let (p10, p11) = (chain.prob(true, false), chain.prob(true, true));

    for t in (0..days).rev() {
        let stage_policy = &mut non_dr[t * np * nz..(t + 1) * np * nz];
        stage_policy
            .par_chunks_mut(nz)
            .zip(nd_values.par_chunks_mut(nz))
            .enumerate()
            .for_each(|(p, (pol, vals))| {
                let mut buf = [0.0; 256];
                for k in 0..nz {
                    for a in 0..g {
                        buf[a] = pi[a * nz + k] + cont0[a + g * p];
                    }
                    let (ia, v) = argmax_smallest(&buf[..g]);
                    pol[k] = ia as u8;
                    vals[k] = v;
                }
            });

        e_nd.par_iter_mut().enumerate().for_each(|(p, e)| {
            *e = (0..nz).map(|k| qs[k] * nd_values[p * nz + k]).sum();
        });
        next0
            .par_iter_mut()
            .zip(next1.par_iter_mut())
            .enumerate()
            .for_each(|(x, (n0, n1))| {
                let e_nd = e_nd[x % np];
                let e_dr = dr_expected[x] + cont1[x];
                *n0 = p00 * e_nd + p01 * e_dr;
                *n1 = p10 * e_nd + p11 * e_dr;
            });

        if let Some(all) = all.as_mut() {
            let stage = &mut all[t * nw * 2 * nz..(t + 1) * nw * 2 * nz];
            for x in 0..nw {
                let p = x % np;
                for k in 0..nz {
                    stage[(x * 2) * nz + k] = nd_values[p * nz + k];
                    stage[(x * 2 + 1) * nz + k] = dr_values[x * nz + k] + cont1[x];
                }
            }
        }
        if t == 0 {
            let p = x0 % np;
            for k in 0..nz {
                initial[k] = nd_values[p * nz + k];
                let a = dr_policy[x0 * nz + k] as usize;
                let b_val = pi[a * nz + k] + {
                    let b = model.program.baseline(initial_window.values())?;
                    r * (b - pts[a]).max(0.0)
                };
                initial[nz + k] = b_val + cont1[x0];
            }
        }
        std::mem::swap(&mut cont0, &mut next0);
        std::mem::swap(&mut cont1, &mut next1);
    }

    let policy = PolicyTable { space: space.clone(), non_dr, dr: dr_policy };
    let values = ValueTable { space, initial_window, initial, all };
    Ok(DpSolution { policy, values })
}

/// Underconsumption on DR days and overconsumption on non-DR days relative to
/// the intrinsic baseline, within one grid step, at the given `(window, z)`
/// pairs and every stage.
pub fn verify_theorem1<'a>(
    solution: &DpSolution,
    states: impl IntoIterator<Item = (&'a ConsumptionWindow, f64)>,
) -> Result<CheckReport> {
    let space = solution.space();
    let step = space.grid.step();
    let days = space.model.horizon.days();
    let mut report = CheckReport::new("DR underconsumption / non-DR overconsumption");
    for (window, z) in states {
        let a_b = space.model.params.intrinsic_baseline(z)?;
        for t in 0..days {
            let dr = solution.policy_at(t, &State::new(window.clone(), true, z)?)?;
            let nd = solution.policy_at(t, &State::new(window.clone(), false, z)?)?;
            report.record(dr <= a_b + step + 1e-12 && a_b <= nd + step + 1e-12, || {
                format!("t={t} window={:?} z={z}: DR {dr}, intrinsic {a_b}, non-DR {nd}", window.values())
            });
        }
    }
    Ok(report)
}

/// [`verify_theorem1`] over every lattice window and z value.
pub fn verify_theorem1_all(solution: &DpSolution) -> Result<CheckReport> {
    let space = solution.space();
    let step = space.grid.step();
    let pts = space.grid.points();
    let nz = space.model.z.len();
    let mut report = CheckReport::new("DR underconsumption / non-DR overconsumption");
    let intrinsic: Vec<f64> = space
        .model
        .z
        .values()
        .iter()
        .map(|z| space.model.params.intrinsic_baseline(*z))
        .collect::<Result<_>>()?;
    for t in 0..space.model.horizon.days() {
        for x in 0..space.lattice.windows {
            for k in 0..nz {
                let dr = pts[solution.policy.action_index(t, x, true, k)];
                let nd = pts[solution.policy.action_index(t, x, false, k)];
                let a_b = intrinsic[k];
                report.record(dr <= a_b + step + 1e-12 && a_b <= nd + step + 1e-12, || {
                    format!("t={t} window={:?} z={}: DR {dr}, intrinsic {a_b}, non-DR {nd}", space.window_values(x), space.model.z.values()[k])
                });
            }
        }
    }
    Ok(report)
}

/// Optimal values are non-decreasing in the window: random comparable pairs
/// `x <= x'` must satisfy `V_t(x, y, z) <= V_t(x', y, z)`.
pub fn verify_value_monotonicity(solution: &DpSolution, pairs: usize, seed: u64) -> Result<CheckReport> {
    let space = solution.space();
    let values = &solution.values;
    if !values.has_all_stages() {
        return Err(Error::param(MODULE, "value monotonicity needs a solution with keep_values"));
    }
    let g = space.grid.len();
    let y = space.lattice.len;
    let nz = space.model.z.len();
    let days = space.model.horizon.days();
    let mut report = CheckReport::new("value function non-decreasing in the window");
    let mut lo = vec![0usize; y];
    let mut hi = vec![0usize; y];
    for i in 0..pairs {
        let case_seed = seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
        let t = rng.gen_range(0..days);
        let dr = rng.gen_bool(0.5);
        let k = rng.gen_range(0..nz);
        for j in 0..y {
            lo[j] = rng.gen_range(0..g);
            hi[j] = rng.gen_range(lo[j]..g);
        }
        let (xl, xh) = (space.lattice.encode(&lo), space.lattice.encode(&hi));
        let vl = values.value_index(t, xl, dr, k).unwrap_or(f64::NAN);
        let vh = values.value_index(t, xh, dr, k).unwrap_or(f64::NAN);
        report.record_seeded(vl <= vh + 1e-9, case_seed, || {
            format!(
                "t={t} dr={dr} z={}: V({:?})={vl} > V({:?})={vh}",
                space.model.z.values()[k],
                space.window_values(xl),
                space.window_values(xh)
            )
        });
    }
    Ok(report)
}

/// The non-DR policy is non-decreasing in the window when the baseline is
/// supermodular (LowXofY, or HighXofY with `X = Y`). Checked on every pair of
/// lattice windows that differ by one grid step in one coordinate, which
/// implies monotonicity along every chain of the lattice.
pub fn verify_theorem3(solution: &DpSolution) -> Result<CheckReport> {
    let space = solution.space();
    let program = space.model.program;
    let eligible = match program.method() {
        BaselineMethod::LowXofY => true,
        BaselineMethod::HighXofY => program.x() == program.y(),
        _ => false,
    };
    if !eligible {
        return Err(Error::param(
            MODULE,
            "non-DR policy monotonicity only holds for LowXofY or HighYofY baselines",
        ));
    }
    let step = space.grid.step();
    let pts = space.grid.points();
    let g = space.grid.len();
    let y = space.lattice.len;
    let nz = space.model.z.len();
    let mut report = CheckReport::new("non-DR policy non-decreasing in the window");
    let mut digits = vec![0usize; y];
    for t in 0..space.model.horizon.days() {
        for p in 0..space.lattice.prefixes {
            space.lattice.decode_into(p, &mut digits);
            let mut stride = 1;
            for d in digits.iter().take(y.saturating_sub(1)) {
                if d + 1 < g {
                    let q = p + stride;
                    for k in 0..nz {
                        let a = pts[solution.policy.action_index(t, p, false, k)];
                        let b = pts[solution.policy.action_index(t, q, false, k)];
                        report.record(a <= b + step + 1e-12, || {
                            format!("t={t} z={}: a*({:?})={a} > a*({:?})={b}", space.model.z.values()[k], space.window_values(p), space.window_values(q))
                        });
                    }
                }
                stride *= g;
            }
        }
    }
    Ok(report)
}

/// DR-day actions follow the closed-form threshold rule within one grid step.
///
/// Where the baseline lies within one grid step of the threshold, the rule
/// jumps between the penalized and intrinsic optima and the grid can move the
/// jump; there the action must be within one step of either optimum.
pub fn verify_dr_threshold(solution: &DpSolution) -> Result<CheckReport> {
    let space = solution.space();
    let step = space.grid.step();
    let pts = space.grid.points();
    let r = space.model.program.rebate();
    let mut report = CheckReport::new("DR-day action follows the threshold rule");
    let optima: Vec<_> = space
        .model
        .z
        .values()
        .iter()
        .map(|z| space.model.params.day_optima(*z, r))
        .collect::<Result<_>>()?;
    for x in 0..space.lattice.windows {
        let w = space.window_values(x);
        let b = space.model.program.baseline(&w)?;
        for (k, opt) in optima.iter().enumerate() {
            let got = pts[solution.policy.action_index(0, x, true, k)];
            let near = |a: f64| (got - a).abs() <= step + 1e-12;
            let ok = near(opt.dr_action(b)) || ((b - opt.threshold).abs() <= step && (near(opt.penalized) || near(opt.intrinsic)));
            report.record(ok, || {
                format!(
                    "window={w:?} z={}: DP {got}, closed form {} (baseline {b}, threshold {})",
                    space.model.z.values()[k],
                    opt.dr_action(b),
                    opt.threshold
                )
            });
        }
    }
    Ok(report)
}

/// Writes `stage,window,dr_flag,z,value,action` rows for every stage and
/// lattice state. `value` is empty when values were not retained.
pub fn write_tables_csv<W: Write>(solution: &DpSolution, out: W) -> Result<()> {
    let space = solution.space();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "window", "dr_flag", "z", "value", "action"])?;
    let nz = space.model.z.len();
    for t in 0..space.model.horizon.days() {
        for x in 0..space.lattice.windows {
            let window = space
                .window_values(x)
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(" ");
            for dr in [false, true] {
                for k in 0..nz {
                    let value = solution
                        .values
                        .value_index(t, x, dr, k)
                        .map(|v| format!("{v}"))
                        .unwrap_or_default();
                    let action = space.grid.points()[solution.policy.action_index(t, x, dr, k)];
                    w.write_record([
                        t.to_string(),
                        window.clone(),
                        (dr as u8).to_string(),
                        space.model.z.values()[k].to_string(),
                        value,
                        action.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io("<table dump>", e))?;
    Ok(())
}

/// Grid argmax of net utility: the DP policy when the rebate is zero.
#[derive(Debug, Clone)]
pub struct GridIntrinsicPolicy {
    grid: ActionGrid,
    params: crate::utility::UtilityParams,
}

impl GridIntrinsicPolicy {
    pub fn new(grid: ActionGrid, params: crate::utility::UtilityParams) -> Self {
        Self { grid, params }
    }

    pub fn action_for(&self, z: f64) -> f64 {
        let vals: Vec<f64> = self.grid.points().iter().map(|a| self.params.net(*a, z)).collect();
        self.grid.points()[argmax_smallest(&vals).0]
    }
}

impl Policy for GridIntrinsicPolicy {
    fn action(&self, _step: Step, state: &State) -> Result<f64> {
        Ok(self.action_for(state.z()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::DrProgram;
    use crate::mdp::{immediate_payoff, transition_window, DrChain, Horizon, ZDistribution};
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

    #[test]
    fn grid_construction() {
        let g = ActionGrid::uniform(10.0, 5).unwrap();
        assert_eq!(g.points(), &[0.0, 2.5, 5.0, 7.5, 10.0]);
        assert_eq!(g.index_of(7.5), Some(3));
        assert_eq!(g.index_of(7.4), None);
        assert_eq!(g.snap(6.3), 7.5);
        assert_eq!(g.snap(-1.0), 0.0);
        assert_eq!(g.snap(11.0), 10.0);
        assert!(ActionGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(ActionGrid::new(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn lattice_round_trip_and_shift() {
        let lat = Lattice::new(4, 3).unwrap();
        for idx in 0..lat.windows() {
            assert_eq!(lat.encode(&lat.decode(idx)), idx);
        }
        let x = lat.encode(&[1, 2, 3]);
        assert_eq!(lat.decode(lat.shift(x, 0)), vec![0, 1, 2]);
    }

    #[test]
    fn zero_rebate_policy_is_intrinsic() {
        let m = model(3, 2, 0.0, 6);
        let grid = ActionGrid::uniform(m.params.a_hat, 10).unwrap();
        let w0 = ConsumptionWindow::constant(3.0, 3).unwrap();
        let sol = solve(&m, &grid, &w0, SolveOptions::default()).unwrap();
        let intrinsic = GridIntrinsicPolicy::new(grid.clone(), m.params);
        for t in 0..6 {
            for x in 0..sol.space().lattice.windows() {
                for (k, z) in m.z.values().iter().enumerate() {
                    let want = intrinsic.action_for(*z);
                    for dr in [false, true] {
                        let got = grid.points()[sol.policy.action_index(t, x, dr, k)];
                        assert_eq!(got, want);
                    }
                    assert!((want - m.params.intrinsic_baseline(*z).unwrap()).abs() <= grid.step());
                }
            }
        }
    }

    #[test]
    fn single_day_matches_closed_forms() {
        let m = model(3, 1, 0.12, 1);
        let grid = ActionGrid::uniform(m.params.a_hat, 10).unwrap();
        let w0 = ConsumptionWindow::constant(3.0, 3).unwrap();
        let sol = solve(&m, &grid, &w0, SolveOptions::default()).unwrap();
        let intrinsic = GridIntrinsicPolicy::new(grid.clone(), m.params);
        for x in 0..sol.space().lattice.windows() {
            let w = sol.space().window(x);
            for z in m.z.values() {
                let nd = sol.policy_at(0, &State::new(w.clone(), false, *z).unwrap()).unwrap();
                assert_eq!(nd, intrinsic.action_for(*z));
                let dr = sol.policy_at(0, &State::new(w.clone(), true, *z).unwrap()).unwrap();
                let b = m.program.baseline(w.values()).unwrap();
                let closed = m.params.dr_day_policy(b, *z, 0.12).unwrap();
                assert!((dr - closed).abs() <= 2.0 * grid.step());
            }
        }
    }

    #[test]
    fn lookup_errors() {
        let m = model(2, 1, 0.12, 3);
        let grid = ActionGrid::uniform(m.params.a_hat, 4).unwrap();
        let w0 = ConsumptionWindow::constant(3.0, 2).unwrap();
        let sol = solve(&m, &grid, &w0, SolveOptions::default()).unwrap();
        let on = ConsumptionWindow::new(vec![grid.points()[1], 0.0]).unwrap();
        assert!(sol.policy_at(0, &State::new(on.clone(), false, 1.0).unwrap()).is_ok());
        let off = ConsumptionWindow::new(vec![1.234, 0.0]).unwrap();
        assert!(sol.policy_at(0, &State::new(off, false, 1.0).unwrap()).is_err());
        assert!(sol.policy_at(3, &State::new(on.clone(), false, 1.0).unwrap()).is_err());
        assert!(sol.policy_at(0, &State::new(on.clone(), false, 0.9).unwrap()).is_err());
        assert!(sol.value_at(1, &State::new(on, false, 1.0).unwrap()).is_err());
    }

    #[test]
    fn memory_budget_enforced() {
        let m = model(7, 1, 0.12, 93);
        let grid = ActionGrid::uniform(m.params.a_hat, 10).unwrap();
        let w0 = ConsumptionWindow::constant(3.0, 7).unwrap();
        let opts = SolveOptions { keep_values: false, memory_budget_bytes: 64 << 20 };
        match solve(&m, &grid, &w0, opts) {
            Err(Error::Resource { msg, .. }) => assert!(msg.contains("rollout")),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    /// Expectimax over explicit windows, independent of the lattice encoding.
    fn expectimax(m: &Model, grid: &ActionGrid, state: &State, t: usize) -> f64 {
        if t == m.horizon.days() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for a in grid.points() {
            let g = immediate_payoff(state, *a, &m.program, &m.params).unwrap();
            let next = transition_window(state, *a, m.params.a_hat).unwrap();
            let mut cont = 0.0;
            for y in [false, true] {
                for (z, q) in m.z.values().iter().zip(m.z.probs()) {
                    let s = State::new(next.clone(), y, *z).unwrap();
                    cont += m.chain.prob(state.dr, y) * q * expectimax(m, grid, &s, t + 1);
                }
            }
            best = best.max(g + cont);
        }
        best
    }

    #[test]
    fn brute_force_expectimax_agrees() {
        let m = model(2, 1, 0.12, 5);
        let grid = ActionGrid::uniform(m.params.a_hat, 4).unwrap();
        let w0 = ConsumptionWindow::new(vec![grid.points()[2], grid.points()[1]]).unwrap();
        let sol = solve(&m, &grid, &w0, SolveOptions { keep_values: true, ..Default::default() }).unwrap();
        for dr in [false, true] {
            for z in m.z.values() {
                let s = State::new(w0.clone(), dr, *z).unwrap();
                let want = expectimax(&m, &grid, &s, 0);
                let got = sol.value_at(0, &s).unwrap();
                assert!((got - want).abs() < 1e-9, "dr={dr} z={z}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bellman_consistency() {
        let m = model(3, 2, 0.12, 4);
        let grid = ActionGrid::uniform(m.params.a_hat, 5).unwrap();
        let w0 = ConsumptionWindow::constant(3.0, 3).unwrap();
        let sol = solve(&m, &grid, &w0, SolveOptions { keep_values: true, ..Default::default() }).unwrap();
        let space = sol.space();
        for t in 0..4 {
            for x in 0..space.lattice.windows() {
                let w = space.window(x);
                for dr in [false, true] {
                    for z in m.z.values() {
                        let s = State::new(w.clone(), dr, *z).unwrap();
                        let mut best = f64::NEG_INFINITY;
                        let mut arg = 0.0;
                        for a in grid.points() {
                            let next = transition_window(&s, *a, m.params.a_hat).unwrap();
                            let mut q = immediate_payoff(&s, *a, &m.program, &m.params).unwrap();
                            for y in [false, true] {
                                for (z2, p) in m.z.values().iter().zip(m.z.probs()) {
                                    let s2 = State::new(next.clone(), y, *z2).unwrap();
                                    q += m.chain.prob(dr, y) * p * sol.value_at(t + 1, &s2).unwrap();
                                }
                            }
                            if q > best + TIE_TOL {
                                best = q;
                                arg = *a;
                            }
                        }
                        assert!((sol.value_at(t, &s).unwrap() - best).abs() < 1e-9);
                        assert_eq!(sol.policy_at(t, &s).unwrap(), arg);
                    }
                }
            }
        }
    }

    #[test]
    fn dr_policy_matches_threshold_rule() {
        for r in [0.06, 0.12, 0.18] {
            let m = model(3, 1, r, 8);
            let grid = ActionGrid::uniform(m.params.a_hat, 10).unwrap();
            let w0 = ConsumptionWindow::constant(3.0, 3).unwrap();
            let sol = solve(&m, &grid, &w0, SolveOptions::default()).unwrap();
            let report = verify_dr_threshold(&sol).unwrap();
            assert!(report.passed(), "{report}");
            assert_eq!(report.checked, 1000 * 3);
        }
    }

    #[test]
    fn structural_checks_pass() {
        let m = model(3, 2, 0.12, 10);
        let grid = ActionGrid::uniform(m.params.a_hat, 8).unwrap();
        let w0 = ConsumptionWindow::constant(3.0, 3).unwrap();
        let sol = solve(&m, &grid, &w0, SolveOptions { keep_values: true, ..Default::default() }).unwrap();
        let r1 = verify_theorem1_all(&sol).unwrap();
        assert!(r1.passed(), "{r1}");
        let rv = verify_value_monotonicity(&sol, 2000, 7).unwrap();
        assert!(rv.passed(), "{rv}");
        assert!(verify_theorem3(&sol).is_err());

        for program in [DrProgram::high(3, 3, 0.12).unwrap(), DrProgram::new(BaselineMethod::LowXofY, 1, 3, 0.12).unwrap()] {
            let sol = solve(&m.with_program(program), &grid, &w0, SolveOptions::default()).unwrap();
            let r3 = verify_theorem3(&sol).unwrap();
            assert!(r3.passed(), "{r3}");
        }
    }

    #[test]
    fn table_dump_has_header_and_rows() {
        let m = model(2, 1, 0.12, 2);
        let grid = ActionGrid::uniform(m.params.a_hat, 3).unwrap();
        let w0 = ConsumptionWindow::constant(0.0, 2).unwrap();
        let sol = solve(&m, &grid, &w0, SolveOptions { keep_values: true, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_tables_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "stage,window,dr_flag,z,value,action");
        assert_eq!(lines.count(), 2 * 9 * 2 * 3);
    }
}
