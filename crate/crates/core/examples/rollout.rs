//! Fit the linear heuristic, wrap it in a one-step rollout and compare the
//! two on paired paths.
//!
//! ```bash
//! cargo run --release --example rollout -- 7 2
//! ```
//! Arguments are `Y` and `X` (defaults 7 and 2).

use drbaseline::baseline::{ConsumptionWindow, DrProgram};
use drbaseline::dp::ActionGrid;
use drbaseline::mdp::{DrChain, Horizon, Model, State, ZDistribution};
use drbaseline::rollout::{default_theta_grid, fit_theta, verify_improvement, Feature, LinearHeuristic, RolloutConfig, RolloutPolicy};
use drbaseline::scenario::model_paths;
use drbaseline::utility::UtilityParams;

fn main() -> drbaseline::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let y = args.next().unwrap_or(7);
    let x = args.next().unwrap_or(2);

    let params = UtilityParams::new(1.56, 1.25, 0.12, 10.77, 0.99)?;
    let model = Model {
        horizon: Horizon::new(93)?,
        program: DrProgram::high(x, y, 0.12)?,
        params,
        chain: DrChain::default(),
        z: ZDistribution::default(),
    };
    let config = RolloutConfig { n_fit_paths: 10, n_eval_paths: 50, seed: 11 };
    let w0 = ConsumptionWindow::constant(params.intrinsic_baseline(1.0)?, y)?;

    let start = State::new(w0.clone(), false, 1.0)?;
    let theta = fit_theta(&model, &start, 0, Feature::WindowMax, &config, &default_theta_grid())?;
    println!("High{x}of{y}: fitted theta = {theta:.3}");

    let heuristic = LinearHeuristic::new(theta, Feature::WindowMax)?;
    let policy = RolloutPolicy::new(model.clone(), heuristic, config, ActionGrid::uniform(params.a_hat, 10)?)?;
    let paths = model_paths(&model, 30, 5, false)?;
    println!("{}", verify_improvement(&policy, &paths, &w0)?);
    Ok(())
}
