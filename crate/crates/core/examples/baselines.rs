//! Exact and approximated baselines on one consumption window, then the
//! approximation error over noisy windows.
//!
//! ```bash
//! cargo run --release --example baselines
//! ```

use drbaseline::baseline::{
    approx_error_percent, approx_high_x_of_y, approx_low_x_of_y, high_x_of_y, low_x_of_y, mid_x_of_y, Truncation,
};
use drbaseline::scenario::{awgn_paths, synthetic_base};

fn main() -> drbaseline::Result<()> {
    let window = [3.1, 2.4, 4.0, 2.9, 3.6, 2.2, 3.3];
    let y = window.len();
    let trunc = Truncation::physical(10.77);

    println!("window {window:?}");
    println!("{:>3} {:>8} {:>8} {:>8} {:>10} {:>10}", "X", "high", "low", "mid", "approx_hi", "approx_lo");
    for x in 1..=y {
        let mid = if (y - x).is_multiple_of(2) { format!("{:8.3}", mid_x_of_y(&window, x)?) } else { format!("{:>8}", "-") };
        println!(
            "{x:>3} {:8.3} {:8.3} {mid} {:10.3} {:10.3}",
            high_x_of_y(&window, x)?,
            low_x_of_y(&window, x)?,
            approx_high_x_of_y(&window, x, &trunc)?,
            approx_low_x_of_y(&window, x)?,
        );
    }

    // Slide each Y-window along noisy paths and tally the relative error.
    let base = synthetic_base(93, 1)?;
    let paths = awgn_paths(&base, 3.0, 20, 7)?;
    for y in [5, 7, 10] {
        let (mut within, mut total) = (0usize, 0usize);
        for path in &paths {
            for w in path.windows(y) {
                for x in 1..=y {
                    let err = approx_error_percent(high_x_of_y(w, x)?, approx_high_x_of_y(w, x, &trunc)?)?;
                    within += usize::from(err.abs() < 5.0);
                    total += 1;
                }
            }
        }
        println!("Y={y:>2}: {:.1}% of {total} errors under 5%", 100.0 * within as f64 / total as f64);
    }
    Ok(())
}
