//! Fit the utility from a consumption history and print the daily optima.
//!
//! Pass a `timestamp,kwh` CSV to fit on metered data; without one a
//! synthetic morning-peak series is used.
//!
//! ```bash
//! cargo run --release --example fit_utility -- history.csv
//! ```

use drbaseline::scenario::{load_history, synthetic_base, HistoryFilter};
use drbaseline::utility::{estimate_params, DEFAULT_U_CHECK};

fn main() -> drbaseline::Result<()> {
    env_logger::init();
    let history = match std::env::args().nth(1) {
        Some(path) => load_history(path.as_ref(), &HistoryFilter::default())?.iter().map(|r| r.kwh).collect(),
        None => synthetic_base(93, 0)?,
    };
    let mean = history.iter().sum::<f64>() / history.len() as f64;
    let max = history.iter().copied().fold(f64::MIN, f64::max);
    println!("{} days, mean {mean:.3} kWh, max {max:.3} kWh", history.len());

    let p = estimate_params(&history, 0.12, DEFAULT_U_CHECK)?;
    println!("rho {:.4}  gamma {:.4}  cap {:.3}", p.rho, p.gamma, p.a_hat);

    println!("{:>5} {:>6} {:>8} {:>8} {:>8}", "z", "r", "a^B", "a^U", "B_th");
    for z in [0.8, 1.0, 1.2] {
        for r in [0.06, 0.12, 0.18] {
            let o = p.day_optima(z, r)?;
            println!("{z:>5} {r:>6} {:8.3} {:8.3} {:8.3}", o.intrinsic, o.penalized, o.threshold);
        }
    }
    Ok(())
}
