//! Solve a small HighXofY program exactly and inspect the optimal policy.
//!
//! ```bash
//! cargo run --release --example exact_dp -- 3 1
//! ```
//! Arguments are `Y` and `X` (defaults 3 and 1).

use drbaseline::baseline::{ConsumptionWindow, DrProgram};
use drbaseline::dp::{self, ActionGrid, SolveOptions};
use drbaseline::mdp::{DrChain, Horizon, Model, State, ZDistribution};
use drbaseline::utility::UtilityParams;

fn main() -> drbaseline::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let y = args.next().unwrap_or(3);
    let x = args.next().unwrap_or(1);

    let params = UtilityParams::new(1.56, 1.25, 0.12, 10.77, 0.99)?;
    let model = Model {
        horizon: Horizon::new(20)?,
        program: DrProgram::high(x, y, 0.12)?,
        params,
        chain: DrChain::default(),
        z: ZDistribution::default(),
    };
    let grid = ActionGrid::uniform(params.a_hat, 10)?;
    println!("grid {:?}", grid.points());
    let w0 = ConsumptionWindow::constant(grid.snap(params.intrinsic_baseline(1.0)?), y)?;
    let sol = dp::solve(&model, &grid, &w0, SolveOptions { keep_values: true, ..Default::default() })?;

    for dr in [false, true] {
        let label = if dr { "DR day" } else { "non-DR day" };
        println!("{label}, z=1: V_0 = {:.4}", sol.values.initial_value(dr, 1.0)?);
    }

    // First-day non-DR policy as the newest window entry varies.
    println!("\nday 0, z=1, window = (w, a0, a0, ...):");
    for &w in grid.points() {
        let mut v = w0.values().to_vec();
        v[0] = w;
        let s = State::new(ConsumptionWindow::new(v)?, false, 1.0)?;
        println!("  w={w:6.3}  a*={:6.3}  V={:9.4}", sol.policy_at(0, &s)?, sol.value_at(0, &s)?);
    }

    println!();
    println!("{}", dp::verify_theorem1_all(&sol)?);
    println!("{}", dp::verify_dr_threshold(&sol)?);
    println!("{}", dp::verify_value_monotonicity(&sol, 10_000, 0)?);
    Ok(())
}
