//! Manipulation curves over X for several rebate prices, the same pipeline
//! the `run` command executes.
//!
//! ```bash
//! cargo run --release --example manipulation_curve -- 5 exact
//! cargo run --release --example manipulation_curve -- 7 rollout
//! ```

use drbaseline::experiment::{curve_for, summarize_curve, ExperimentConfig, Setup, Solver};

fn main() -> drbaseline::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let y: usize = args.next().map_or(5, |a| a.parse().expect("Y must be an integer"));
    let solver: Solver = args.next().map_or(Ok(Solver::Exact), |a| a.parse())?;
    let cfg = ExperimentConfig {
        y,
        solver,
        n_paths: 50,
        n_eval_paths: 50,
        rebates: vec![0.06, 0.12, 0.18],
        ..Default::default()
    };
    cfg.validate()?;
    let setup = Setup::new(&cfg)?;
    for &r in &cfg.rebates {
        let (curve, _) = curve_for(&cfg, &setup, r, solver)?;
        println!("{}", summarize_curve(format!("High X of {y}, r = {r}"), curve));
    }
    Ok(())
}
