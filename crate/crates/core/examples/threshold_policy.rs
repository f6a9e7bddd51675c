//! The DR-day consumption rule: curtail to the penalized optimum when the
//! baseline is high enough to pay for it, otherwise follow the baseline down
//! or stay at the intrinsic level.

use drbaseline::utility::UtilityParams;

fn main() -> drbaseline::Result<()> {
    let p = UtilityParams::new(1.56, 1.25, 0.12, 10.77, 0.99)?;
    let (z, r) = (1.0, 0.12);
    let o = p.day_optima(z, r)?;
    println!("z={z} r={r}: a^B={:.3} a^U={:.3} B_th={:.3}", o.intrinsic, o.penalized, o.threshold);
    println!("{:>8} {:>8} {:>10}", "B", "a*", "payoff");
    for i in 0..=12 {
        let b = 0.5 * i as f64;
        let a = o.dr_action(b);
        let payoff = p.net_utility(a, z)? + r * (b - a).max(0.0);
        println!("{b:8.2} {a:8.3} {payoff:10.4}");
    }
    Ok(())
}
