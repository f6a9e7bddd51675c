//! Baseline bias, manipulation curves and their shape diagnostics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::baseline::ConsumptionWindow;
use crate::error::{Error, Result};
use crate::mdp::{Model, Policy};
use crate::rollout::{simulate_policy, PathOutcome};
use crate::scenario::ScenarioPath;

const MODULE: &str = "metrics";

/// Relative plateau tolerance of [`single_peak_check`].
pub const PEAK_TOL: f64 = 1e-6;

/// `100 * sum(B - a^B) / sum(a^B)` over DR days.
pub fn bias(baselines: &[f64], intrinsic: &[f64]) -> Result<f64> {
    if baselines.len() != intrinsic.len() {
        return Err(Error::data(MODULE, "baseline and intrinsic series differ in length"));
    }
    if baselines.is_empty() {
        return Err(Error::data(MODULE, "bias needs at least one DR day"));
    }
    let denom: f64 = intrinsic.iter().sum();
    if !(denom > 0.0) {
        return Err(Error::data(MODULE, "intrinsic consumption on DR days sums to zero"));
    }
    let num: f64 = baselines.iter().zip(intrinsic).map(|(b, a)| b - a).sum();
    Ok(100.0 * num / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub bias_percent: f64,
    pub n_dr_days: usize,
    /// `(B_t, a^B_t)` of every DR day.
    pub terms: Vec<(f64, f64)>,
}

/// Bias of a simulated policy, pooled over paths. `reference[p][t]` is the
/// intrinsic consumption on day `t` of path `p`.
pub fn bias_report(outcomes: &[PathOutcome], reference: &[Vec<f64>]) -> Result<BiasReport> {
    if outcomes.len() != reference.len() {
        return Err(Error::data(MODULE, "outcome and reference path counts differ"));
    }
    let mut terms = Vec::new();
    for (o, r) in outcomes.iter().zip(reference) {
        for (b, a) in o.baselines.iter().zip(r) {
            if let Some(b) = b {
                terms.push((*b, *a));
            }
        }
    }
    let (bs, as_): (Vec<f64>, Vec<f64>) = terms.iter().copied().unzip();
    Ok(BiasReport { bias_percent: bias(&bs, &as_)?, n_dr_days: terms.len(), terms })
}

/// Standard error of the pooled ratio `sum(D_p) / sum(A_p)` over paths.
fn ratio_std_error(num: &[f64], den: &[f64]) -> f64 {
    let n = num.len();
    if n < 2 {
        return 0.0;
    }
    let total_den: f64 = den.iter().sum();
    let ratio = num.iter().sum::<f64>() / total_den;
    let ss: f64 = num.iter().zip(den).map(|(d, a)| (d - ratio * a).powi(2)).sum();
    (n as f64 / (n as f64 - 1.0) * ss).sqrt() / total_den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: usize,
    pub bias_no_dr: f64,
    pub bias_dr: f64,
    pub manipulation: f64,
    /// Standard error of `manipulation`, in percentage points.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationCurve {
    pub points: Vec<CurvePoint>,
}

impl ManipulationCurve {
    pub fn manipulation(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.manipulation).collect()
    }

    pub fn bias_no_dr(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.bias_no_dr).collect()
    }

    pub fn point(&self, x: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.x == x)
    }
}

/// Compares a strategic and an intrinsic simulation of the same paths.
pub fn curve_point(x: usize, strategic: &[PathOutcome], intrinsic: &[PathOutcome]) -> Result<CurvePoint> {
    if strategic.len() != intrinsic.len() {
        return Err(Error::data(MODULE, "strategic and intrinsic path counts differ"));
    }
    let reference: Vec<Vec<f64>> = intrinsic.iter().map(|o| o.actions.clone()).collect();
    let dr = bias_report(strategic, &reference)?;
    let no_dr = bias_report(intrinsic, &reference)?;
    let mut num = Vec::with_capacity(strategic.len());
    let mut den = Vec::with_capacity(strategic.len());
    for (s, i) in strategic.iter().zip(intrinsic) {
        let mut d = 0.0;
        let mut a = 0.0;
        for t in 0..s.baselines.len() {
            match (s.baselines[t], i.baselines[t]) {
                (Some(bs), Some(bi)) => {
                    d += bs - bi;
                    a += i.actions[t];
                }
                (None, None) => {}
                _ => return Err(Error::data(MODULE, "strategic and intrinsic runs disagree on DR days")),
            }
        }
        num.push(d);
        den.push(a);
    }
    Ok(CurvePoint {
        x,
        bias_no_dr: no_dr.bias_percent,
        bias_dr: dr.bias_percent,
        manipulation: dr.bias_percent - no_dr.bias_percent,
        stderr: 100.0 * ratio_std_error(&num, &den),
    })
}

/// Bias with and without the program for every `X` in `xs`.
///
/// `strategic` builds the customer's policy for the program with a given
/// `X`; `intrinsic` is the no-incentive policy. Both run on the same paths,
/// so each baseline is computed from the windows that policy produced.
pub fn manipulation_curve<P, F, I>(
    model: &Model,
    xs: &[usize],
    mut strategic: F,
    intrinsic: &I,
    paths: &[ScenarioPath],
    initial_window: &ConsumptionWindow,
) -> Result<ManipulationCurve>
where
    P: Policy,
    F: FnMut(&Model) -> Result<P>,
    I: Policy + ?Sized,
{
    let mut points = Vec::with_capacity(xs.len());
    for &x in xs {
        let mx = model.with_program(model.program.with_x(x)?);
        let policy = strategic(&mx)?;
        let s = simulate_policy(&policy, paths, &mx, initial_window)?;
        let i = simulate_policy(intrinsic, paths, &mx, initial_window)?;
        let point = curve_point(x, &s.outcomes, &i.outcomes)?;
        log::info!(
            "X={x}: bias without DR {:.3}%, with DR {:.3}%, manipulation {:.3} +/- {:.3}",
            point.bias_no_dr,
            point.bias_dr,
            point.manipulation,
            point.stderr
        );
        points.push(point);
    }
    Ok(ManipulationCurve { points })
}

/// Whether `curve` rises (non-strictly) to a single peak region and then
/// falls (non-strictly), with plateaus tolerated up to `1e-6` of the range.
/// Returns the 1-based position of the first point of the peak region.
pub fn single_peak_check(curve: &[f64]) -> (bool, usize) {
    if curve.is_empty() {
        return (false, 0);
    }
    let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let eps = PEAK_TOL * (hi - lo);
    let mut i = 0;
    while i + 1 < curve.len() && curve[i + 1] >= curve[i] - eps {
        i += 1;
    }
    let falling = curve[i..].windows(2).all(|w| w[1] <= w[0] + eps);
    let peak = curve[..=i]
        .iter()
        .position(|v| *v >= curve[i] - eps)
        .unwrap_or(i);
    (falling, peak + 1)
}

pub fn write_curve_csv<W: Write>(curve: &ManipulationCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["X", "bias_no_dr_pct", "bias_dr_pct", "manipulation_pct", "stderr_pct"])?;
    for p in &curve.points {
        w.write_record([
            p.x.to_string(),
            p.bias_no_dr.to_string(),
            p.bias_dr.to_string(),
            p.manipulation.to_string(),
            p.stderr.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<curve>", e))?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(reader: R) -> Result<ManipulationCurve> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut points = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |j: usize| -> Result<f64> {
            row.get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::data(MODULE, format!("curve row {}: bad column {}", i + 1, j + 1)))
        };
        let x = row
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::data(MODULE, format!("curve row {}: bad X", i + 1)))?;
        points.push(CurvePoint {
            x,
            bias_no_dr: field(1)?,
            bias_dr: field(2)?,
            manipulation: field(3)?,
            stderr: field(4)?,
        });
    }
    Ok(ManipulationCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(actions: Vec<f64>, baselines: Vec<Option<f64>>) -> PathOutcome {
        PathOutcome { actions, baselines, total: 0.0 }
    }

    #[test]
    fn bias_examples() {
        assert_eq!(bias(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(bias(&[2.0, 2.0], &[1.0, 1.0]).unwrap(), 100.0);
        assert!(bias(&[], &[]).is_err());
        assert!(bias(&[1.0], &[0.0]).is_err());
        assert!(bias(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bias_is_scale_invariant() {
        let b = [2.0, 3.5, 1.25];
        let a = [1.5, 3.0, 2.0];
        let base = bias(&b, &a).unwrap();
        for k in [0.1, 3.0, 1e4] {
            let bk: Vec<f64> = b.iter().map(|v| v * k).collect();
            let ak: Vec<f64> = a.iter().map(|v| v * k).collect();
            assert!((bias(&bk, &ak).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_point_identity_and_zero_gap() {
        let i = vec![
            outcome(vec![1.0, 2.0, 3.0], vec![None, Some(1.5), None]),
            outcome(vec![2.0, 2.0, 2.0], vec![Some(2.0), None, Some(2.5)]),
        ];
        let p = curve_point(1, &i, &i).unwrap();
        assert_eq!(p.manipulation, 0.0);
        assert_eq!(p.stderr, 0.0);

        let s = vec![
            outcome(vec![1.0, 2.0, 3.0], vec![None, Some(2.5), None]),
            outcome(vec![2.0, 2.0, 2.0], vec![Some(3.0), None, Some(3.5)]),
        ];
        let p = curve_point(1, &s, &i).unwrap();
        assert!((p.manipulation - (p.bias_dr - p.bias_no_dr)).abs() < 1e-12);
        assert!((p.manipulation - 100.0 * 3.0 / 6.0).abs() < 1e-9);

        let bad = vec![outcome(vec![1.0; 3], vec![None; 3]), i[1].clone()];
        assert!(curve_point(1, &bad, &i).is_err());
    }

    #[test]
    fn single_peak_examples() {
        assert_eq!(single_peak_check(&[1.0, 3.0, 2.0]), (true, 2));
        assert!(!single_peak_check(&[1.0, 2.0, 1.0, 2.0]).0);
        assert_eq!(single_peak_check(&[5.0, 5.0, 5.0]), (true, 1));
        assert_eq!(single_peak_check(&[1.0, 3.0, 3.0, 2.0]), (true, 2));
        assert_eq!(single_peak_check(&[4.0, 3.0, 1.0]), (true, 1));
        assert_eq!(single_peak_check(&[1.0, 2.0, 4.0]), (true, 3));
        assert!(!single_peak_check(&[3.0, 1.0, 3.0]).0);
        assert!(single_peak_check(&[1.0, 2.0, 2.0 - 1e-9, 1.5]).0);
    }

    #[test]
    fn curve_csv_round_trip() {
        let c = ManipulationCurve {
            points: vec![
                CurvePoint { x: 1, bias_no_dr: 20.5, bias_dr: 31.0, manipulation: 10.5, stderr: 0.25 },
                CurvePoint { x: 2, bias_no_dr: 1.0 / 3.0, bias_dr: 2.0, manipulation: 2.0 - 1.0 / 3.0, stderr: 0.0 },
            ],
        };
        let mut buf = Vec::new();
        write_curve_csv(&c, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("X,bias_no_dr_pct,bias_dr_pct,manipulation_pct,stderr_pct\n"));
        assert_eq!(read_curve_csv(buf.as_slice()).unwrap(), c);
    }
}
