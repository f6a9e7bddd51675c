use drbaseline::baseline::{
    approx_high_x_of_y, high_x_of_y, low_x_of_y, mid_x_of_y, ConsumptionWindow, DrProgram, Truncation,
};
use drbaseline::baseline::truncnorm::TruncNormalSpec;
use drbaseline::dp::{self, ActionGrid, GridIntrinsicPolicy, SolveOptions};
use drbaseline::mdp::{DrChain, Horizon, IntrinsicPolicy, Model, Policy, State, Step, ZDistribution};
use drbaseline::metrics::{bias, manipulation_curve, single_peak_check};
use drbaseline::scenario::model_paths;
use drbaseline::utility::UtilityParams;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn window_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (1usize..=10).prop_flat_map(|y| {
        (
            prop::collection::vec(0.0f64..10.0, y),
            prop::collection::vec(0.0f64..10.0, y),
            1..=y,
        )
    })
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u.max(*v)).collect()
}

fn meet(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u.min(*v)).collect()
}

fn params() -> UtilityParams {
    UtilityParams::new(1.56, 1.25, 0.12, 10.77, 0.99).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn high_low_bracket_mid((a, _, x) in window_pair()) {
        let (h, l) = (high_x_of_y(&a, x).unwrap(), low_x_of_y(&a, x).unwrap());
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        prop_assert!(l <= mean + TOL && mean <= h + TOL);
        if (a.len() - x) % 2 == 0 {
            let m = mid_x_of_y(&a, x).unwrap();
            prop_assert!(l <= m + TOL && m <= h + TOL);
        }
    }

    #[test]
    fn high_is_submodular_and_low_supermodular((a, b, x) in window_pair()) {
        let (j, m) = (join(&a, &b), meet(&a, &b));
        let h = |v: &[f64]| high_x_of_y(v, x).unwrap();
        let l = |v: &[f64]| low_x_of_y(v, x).unwrap();
        prop_assert!(h(&a) + h(&b) >= h(&j) + h(&m) - TOL);
        prop_assert!(l(&a) + l(&b) <= l(&j) + l(&m) + TOL);
    }

    #[test]
    fn baselines_commute_with_permutation((a, _, x) in window_pair(), rot in 0usize..10) {
        let mut r = a.clone();
        let k = rot % r.len();
        r.rotate_left(k);
        prop_assert!((high_x_of_y(&a, x).unwrap() - high_x_of_y(&r, x).unwrap()).abs() < TOL);
        prop_assert!((low_x_of_y(&a, x).unwrap() - low_x_of_y(&r, x).unwrap()).abs() < TOL);
    }

    #[test]
    fn approx_high_shift_equivariant_with_fixed_truncation(
        (a, _, x) in window_pair(),
        c in 0.0f64..5.0,
    ) {
        prop_assume!(a.len() >= 2);
        let t = Truncation::Fixed(TruncNormalSpec::standard(-2.5, 2.5).unwrap());
        let shifted: Vec<f64> = a.iter().map(|v| v + c).collect();
        let d = approx_high_x_of_y(&shifted, x, &t).unwrap() - approx_high_x_of_y(&a, x, &t).unwrap();
        prop_assert!((d - c).abs() < 1e-9 * (1.0 + c));
    }

    #[test]
    fn dr_action_is_optimal_on_the_day(z in 0.2f64..3.0, r in 0.0f64..0.3, b in 0.0f64..10.77) {
        let p = params();
        let a = p.dr_day_policy(b, z, r).unwrap();
        let payoff = |a: f64| p.net_utility(a, z).unwrap() + r * (b - a).max(0.0);
        let best = (0..=4000).map(|i| payoff(10.77 * i as f64 / 4000.0)).fold(f64::MIN, f64::max);
        prop_assert!(payoff(a) >= best - 1e-6);
    }

    #[test]
    fn bias_is_scale_invariant(
        v in prop::collection::vec((0.0f64..10.0, 0.1f64..10.0), 1..30),
        k in 0.01f64..100.0,
    ) {
        let (b, a): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let kb: Vec<f64> = b.iter().map(|x| x * k).collect();
        let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
        let (b0, b1) = (bias(&b, &a).unwrap(), bias(&kb, &ka).unwrap());
        prop_assert!((b0 - b1).abs() < 1e-9 * (1.0 + b0.abs()));
    }

    #[test]
    fn single_peak_accepts_unimodal(up in prop::collection::vec(0.0f64..1.0, 0..6), down in prop::collection::vec(0.0f64..1.0, 0..6)) {
        let mut curve = vec![0.0];
        for d in &up {
            curve.push(curve.last().unwrap() + d);
        }
        for d in &down {
            curve.push(curve.last().unwrap() - d);
        }
        prop_assert!(single_peak_check(&curve).0);
    }
}

#[test]
fn single_peak_examples() {
    assert_eq!(single_peak_check(&[1.0, 3.0, 2.0]), (true, 2));
    assert!(!single_peak_check(&[1.0, 2.0, 1.0, 2.0]).0);
    assert!(single_peak_check(&[5.0, 5.0, 5.0]).0);
}

#[test]
fn bias_arithmetic() {
    assert_eq!(bias(&[2.0, 2.0], &[1.0, 1.0]).unwrap(), 100.0);
    assert_eq!(bias(&[1.5, 2.5], &[1.5, 2.5]).unwrap(), 0.0);
    assert!(bias(&[], &[]).is_err());
    assert!(bias(&[1.0], &[0.0]).is_err());
}

fn model(y: usize, r: f64) -> Model {
    Model {
        horizon: Horizon::new(30).unwrap(),
        program: DrProgram::high(1, y, r).unwrap(),
        params: params(),
        chain: DrChain::default(),
        z: ZDistribution::default(),
    }
}

#[test]
fn zero_rebate_means_zero_manipulation() {
    let m = model(3, 0.0);
    let grid = ActionGrid::uniform(10.77, 10).unwrap();
    let w0 = ConsumptionWindow::constant(grid.snap(2.96), 3).unwrap();
    let paths = model_paths(&m, 20, 4, false).unwrap();
    let intrinsic = GridIntrinsicPolicy::new(grid.clone(), m.params);
    let curve = manipulation_curve(
        &m,
        &[1, 2, 3],
        |mx: &Model| dp::solve(mx, &grid, &w0, SolveOptions::default()),
        &intrinsic,
        &paths,
        &w0,
    )
    .unwrap();
    for p in &curve.points {
        assert!(p.manipulation.abs() < 1e-12, "X={}: {}", p.x, p.manipulation);
        assert!((p.manipulation - (p.bias_dr - p.bias_no_dr)).abs() < 1e-12);
    }
}

#[test]
fn intrinsic_policy_ignores_the_window() {
    let p = IntrinsicPolicy { params: params() };
    let step = Step { path: 0, t: 0 };
    let a = State::new(ConsumptionWindow::constant(1.0, 3).unwrap(), false, 1.2).unwrap();
    let b = State::new(ConsumptionWindow::constant(9.0, 3).unwrap(), true, 1.2).unwrap();
    assert_eq!(p.action(step, &a).unwrap(), p.action(step, &b).unwrap());
}

#[test]
fn manipulation_grows_with_rebate_at_high1of3() {
    let grid = ActionGrid::uniform(10.77, 10).unwrap();
    let w0 = ConsumptionWindow::constant(grid.snap(2.96), 3).unwrap();
    let mut last = f64::NEG_INFINITY;
    for r in [0.0, 0.06, 0.12, 0.18] {
        let m = model(3, r);
        let paths = model_paths(&m, 50, 8, false).unwrap();
        let intrinsic = GridIntrinsicPolicy::new(grid.clone(), m.params);
        let curve = manipulation_curve(
            &m,
            &[1],
            |mx: &Model| dp::solve(mx, &grid, &w0, SolveOptions::default()),
            &intrinsic,
            &paths,
            &w0,
        )
        .unwrap();
        let v = curve.points[0].manipulation;
        assert!(v >= last - curve.points[0].stderr, "r={r}: {v} < {last}");
        last = v;
    }
}
