//! Generate noisy consumption paths with DR events and quantized utility
//! scales, and print a summary plus the first rows of the path table.

use drbaseline::scenario::{build_scenarios, synthetic_base, write_paths_csv, ScenarioSpec};
use drbaseline::utility::{estimate_params, DEFAULT_U_CHECK};

fn main() -> drbaseline::Result<()> {
    env_logger::init();
    let base = synthetic_base(93, 0)?;
    let params = estimate_params(&base, 0.12, DEFAULT_U_CHECK)?;
    let spec = ScenarioSpec { n_paths: 100, ..Default::default() };
    let set = build_scenarios(&base, &spec, &params, 42)?;

    let dr: f64 = set.paths.iter().map(|p| p.dr_fraction()).sum::<f64>() / set.paths.len() as f64;
    println!("{} paths of {} days, DR fraction {dr:.3}", set.paths.len(), set.paths[0].days());
    println!("chain stationary DR fraction {:?}", spec.chain.stationary_dr_fraction());
    println!("z bin edges {:?}", set.quantizer.edges);
    println!("z values {:?}", set.quantizer.distribution.values());

    let mut buf = Vec::new();
    write_paths_csv(&set.paths[..1], &mut buf)?;
    for line in String::from_utf8_lossy(&buf).lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
