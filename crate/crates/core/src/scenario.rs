//! Scenario construction: historical load ingestion, AWGN consumption paths,
//! DR event sequences and the utility-scale series derived from consumption.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{DrChain, Model, ZDistribution};
use crate::rng::{stream_rng, STREAM_DR, STREAM_NOISE, STREAM_Z};
use crate::utility::UtilityParams;

const MODULE: &str = "scenario";

/// Consumption in the DR hour of one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub timestamp: NaiveDateTime,
    pub kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFilter {
    /// Hour of day kept, 0-23.
    pub hour: u32,
    pub weekdays_only: bool,
    pub holidays: BTreeSet<NaiveDate>,
    /// Length of the contiguous highest-consumption block kept; `None`
    /// keeps every day.
    pub season_days: Option<usize>,
}

impl Default for HistoryFilter {
    fn default() -> Self {
        Self { hour: 9, weekdays_only: true, holidays: BTreeSet::new(), season_days: Some(93) }
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

/// Reads `timestamp,kwh` rows and returns one record per kept day.
///
/// Readings inside the selected hour are summed, so sub-hourly data is
/// aggregated to the hour. Row numbers in errors count data rows from 1.
pub fn read_history<R: Read>(reader: R, filter: &HistoryFilter) -> Result<Vec<HistoryRecord>> {
    if filter.hour > 23 {
        return Err(Error::param(MODULE, format!("hour must be 0-23, got {}", filter.hour)));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::data(MODULE, format!("history file lacks a `{name}` column")))
    };
    let (ts_col, kwh_col) = (col("timestamp")?, col("kwh")?);

    let mut days: Vec<(NaiveDate, NaiveDateTime, f64)> = Vec::new();
    let mut seen: BTreeSet<NaiveDateTime> = BTreeSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::data(MODULE, format!("row {row_no}: {e}")))?;
        let raw_ts = row.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| Error::data(MODULE, format!("row {row_no}: unparsable timestamp `{raw_ts}`")))?;
        let raw_kwh = row.get(kwh_col).unwrap_or("");
        let kwh: f64 = raw_kwh
            .parse()
            .map_err(|_| Error::data(MODULE, format!("row {row_no}: unparsable kwh `{raw_kwh}`")))?;
        if !kwh.is_finite() || kwh < 0.0 {
            return Err(Error::data(MODULE, format!("row {row_no}: consumption must be finite and >= 0, got {kwh}")));
        }
        if !seen.insert(ts) {
            return Err(Error::data(MODULE, format!("row {row_no}: duplicate timestamp {ts}")));
        }
        if ts.hour() != filter.hour {
            continue;
        }
        let date = ts.date();
        if filter.weekdays_only && matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            continue;
        }
        if filter.holidays.contains(&date) {
            continue;
        }
        days.push((date, ts, kwh));
    }
    days.sort_by_key(|d| d.1);
    let mut records: Vec<HistoryRecord> = Vec::new();
    let mut last_date = None;
    for (date, ts, kwh) in days {
        if last_date == Some(date) {
            records.last_mut().expect("previous record").kwh += kwh;
        } else {
            records.push(HistoryRecord { timestamp: ts.date().and_hms_opt(filter.hour, 0, 0).unwrap_or(ts), kwh });
            last_date = Some(date);
        }
    }
    match filter.season_days {
        Some(0) => Err(Error::param(MODULE, "season length must be positive")),
        Some(n) if records.len() > n => {
            let start = peak_block_start(&records, n);
            Ok(records[start..start + n].to_vec())
        }
        Some(n) => {
            if records.len() < n {
                log::warn!("history has {} usable days, fewer than the {n}-day season", records.len());
            }
            Ok(records)
        }
        None => Ok(records),
    }
}

/// Start of the `n`-record block with the largest total consumption;
/// earliest on ties.
fn peak_block_start(records: &[HistoryRecord], n: usize) -> usize {
    let mut sum: f64 = records[..n].iter().map(|r| r.kwh).sum();
    let (mut best, mut best_sum) = (0, sum);
    for start in 1..=records.len() - n {
        sum += records[start + n - 1].kwh - records[start - 1].kwh;
        if sum > best_sum + 1e-12 {
            best = start;
            best_sum = sum;
        }
    }
    best
}

pub fn load_history(path: &Path, filter: &HistoryFilter) -> Result<Vec<HistoryRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_history(file, filter).map_err(|e| match e {
        Error::Data { module, msg } => Error::Data { module, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

/// One ISO date per line; blank lines and `#` comments are skipped.
pub fn load_holidays(path: &Path) -> Result<BTreeSet<NaiveDate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let d = NaiveDate::parse_from_str(line, "%Y-%m-%d")
            .map_err(|_| Error::data(MODULE, format!("{} line {}: bad date `{line}`", path.display(), i + 1)))?;
        out.insert(d);
    }
    Ok(out)
}

/// Noisy copies of `base` and the Gaussian noise that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AwgnPaths {
    pub paths: Vec<Vec<f64>>,
    /// Noise before clamping; `paths = max(base + noise, 0)`.
    pub noise: Vec<Vec<f64>>,
}

/// Noise standard deviation at `snr_db`, with signal power the mean square
/// of `base`.
pub fn noise_std(base: &[f64], snr_db: f64) -> Result<f64> {
    if base.is_empty() {
        return Err(Error::data(MODULE, "base series is empty"));
    }
    if snr_db.is_nan() {
        return Err(Error::param(MODULE, "SNR is NaN"));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let power = base.iter().map(|v| v * v).sum::<f64>() / base.len() as f64;
    Ok((power / 10f64.powf(snr_db / 10.0)).sqrt())
}

pub fn awgn_paths_with_noise(base: &[f64], snr_db: f64, n_paths: usize, seed: u64) -> Result<AwgnPaths> {
    if base.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::data(MODULE, "base series must be finite and non-negative"));
    }
    let sd = noise_std(base, snr_db)?;
    let mut paths = Vec::with_capacity(n_paths);
    let mut noise = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let e: Vec<f64> = if sd == 0.0 {
            vec![0.0; base.len()]
        } else {
            let normal = Normal::new(0.0, sd).map_err(|e| Error::numeric(MODULE, e.to_string()))?;
            let mut rng = stream_rng(seed, STREAM_NOISE, &[p as u64]);
            (0..base.len()).map(|_| normal.sample(&mut rng)).collect()
        };
        paths.push(base.iter().zip(&e).map(|(b, n)| (b + n).max(0.0)).collect());
        noise.push(e);
    }
    Ok(AwgnPaths { paths, noise })
}

/// `n_paths` noisy copies of `base` at signal-to-noise ratio `snr_db`,
/// clamped at zero. `snr_db = +inf` returns exact copies.
pub fn awgn_paths(base: &[f64], snr_db: f64, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(awgn_paths_with_noise(base, snr_db, n_paths, seed)?.paths)
}

/// DR flags of `n_paths` chains of `days` days starting from `y0` on day 0.
pub fn dr_sequences(days: usize, chain: &DrChain, n_paths: usize, seed: u64, y0: bool) -> Vec<Vec<bool>> {
    (0..n_paths)
        .map(|p| {
            let mut rng = stream_rng(seed, STREAM_DR, &[p as u64]);
            dr_sequence(days, chain, y0, &mut rng)
        })
        .collect()
}

pub fn dr_sequence<R: Rng + ?Sized>(days: usize, chain: &DrChain, y0: bool, rng: &mut R) -> Vec<bool> {
    let mut out = Vec::with_capacity(days);
    let mut y = y0;
    for t in 0..days {
        if t > 0 {
            y = chain.sample_next(y, rng);
        }
        out.push(y);
    }
    out
}

/// Utility scale that makes each consumption the intrinsic baseline:
/// `z = (rho * omega / gamma) * exp(a / rho)`. Values above the cap are
/// clamped to it.
pub fn derive_z(consumption: &[f64], params: &UtilityParams) -> Result<Vec<f64>> {
    let (out, clamped) = derive_z_counted(consumption, params)?;
    warn_clamped(clamped, params);
    Ok(out)
}

fn warn_clamped(clamped: usize, params: &UtilityParams) {
    if clamped > 0 {
        log::warn!("{clamped} consumption values above the cap {} were clamped before deriving z", params.a_hat);
    }
}

fn derive_z_counted(consumption: &[f64], params: &UtilityParams) -> Result<(Vec<f64>, usize)> {
    let mut clamped = 0usize;
    let out = consumption
        .iter()
        .map(|a| {
            if !a.is_finite() || *a < 0.0 {
                return Err(Error::data(MODULE, format!("consumption {a} is not a valid kWh value")));
            }
            let a = if *a > params.a_hat {
                clamped += 1;
                params.a_hat
            } else {
                *a
            };
            Ok(params.rho * params.omega / params.gamma * (a / params.rho).exp())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, clamped))
}

/// Empirical quantile bins of the utility scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZQuantizer {
    /// Upper edges of all bins but the last.
    pub edges: Vec<f64>,
    pub distribution: ZDistribution,
}

impl ZQuantizer {
    /// Splits the sorted values into `k` equal-count bins, merging bins whose
    /// boundary falls between equal values. Each bin is weighted by its share
    /// of the sample and represented by its geometric mean, which is the z of
    /// the bin's mean consumption since consumption is affine in `ln z`.
    pub fn fit(values: &[f64], k: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data(MODULE, "cannot quantize an empty z sample"));
        }
        if k == 0 {
            return Err(Error::param(MODULE, "need at least one z bin"));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::data(MODULE, "z values must be finite and positive"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut cuts: Vec<usize> = (1..k).map(|i| i * n / k).filter(|c| *c > 0 && *c < n).collect();
        cuts.dedup();
        cuts.retain(|c| sorted[c - 1] < sorted[*c]);
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(n);
        let mut means = Vec::new();
        let mut probs = Vec::new();
        let mut edges = Vec::new();
        for w in bounds.windows(2) {
            let bin = &sorted[w[0]..w[1]];
            means.push((bin.iter().map(|v| v.ln()).sum::<f64>() / bin.len() as f64).exp());
            probs.push(bin.len() as f64 / n as f64);
            if w[1] < n {
                edges.push(sorted[w[1] - 1]);
            }
        }
        // Bin means of separated bins are strictly increasing, but rounding
        // can tie them for nearly equal values.
        for i in 1..means.len() {
            if means[i] <= means[i - 1] {
                means[i] = f64::from_bits(means[i - 1].to_bits() + 1);
            }
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { edges, distribution: ZDistribution::new(means, probs)? })
    }

    pub fn bin(&self, z: f64) -> usize {
        self.edges.partition_point(|e| *e < z)
    }

    pub fn quantize(&self, z: f64) -> f64 {
        self.distribution.values()[self.bin(z)]
    }
}

/// One simulated season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPath {
    pub consumption: Vec<f64>,
    pub dr_flags: Vec<bool>,
    /// Quantized utility scale of each day.
    pub z_values: Vec<f64>,
}

impl ScenarioPath {
    pub fn new(consumption: Vec<f64>, dr_flags: Vec<bool>, z_values: Vec<f64>) -> Result<Self> {
        let t = consumption.len();
        if dr_flags.len() != t || z_values.len() != t {
            return Err(Error::data(
                MODULE,
                format!("path lengths differ: {} consumption, {} flags, {} z", t, dr_flags.len(), z_values.len()),
            ));
        }
        if consumption.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::data(MODULE, "path consumption must be finite and >= 0"));
        }
        if z_values.iter().any(|z| !(*z > 0.0) || !z.is_finite()) {
            return Err(Error::data(MODULE, "path z values must be finite and > 0"));
        }
        Ok(Self { consumption, dr_flags, z_values })
    }

    pub fn days(&self) -> usize {
        self.consumption.len()
    }

    pub fn dr_fraction(&self) -> f64 {
        self.dr_flags.iter().filter(|y| **y).count() as f64 / self.days().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_paths: usize,
    pub snr_db: f64,
    pub chain: DrChain,
    pub y0: bool,
    pub z_bins: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self { n_paths: 100, snr_db: 3.0, chain: DrChain::default(), y0: false, z_bins: 3 }
    }
}

/// Scenario paths together with the z distribution fitted to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub paths: Vec<ScenarioPath>,
    pub quantizer: ZQuantizer,
}

/// Noisy consumption, independent DR sequences and quantized z for every
/// path. The quantizer is fitted on the pooled z values of all paths.
pub fn build_scenarios(base: &[f64], spec: &ScenarioSpec, params: &UtilityParams, seed: u64) -> Result<ScenarioSet> {
    if spec.n_paths == 0 {
        return Err(Error::param(MODULE, "need at least one path"));
    }
    let consumption = awgn_paths(base, spec.snr_db, spec.n_paths, seed)?;
    let flags = dr_sequences(base.len(), &spec.chain, spec.n_paths, seed, spec.y0);
    let mut clamped = 0;
    let mut raw_z = Vec::with_capacity(consumption.len());
    for c in &consumption {
        let (z, n) = derive_z_counted(c, params)?;
        clamped += n;
        raw_z.push(z);
    }
    warn_clamped(clamped, params);
    let pooled: Vec<f64> = raw_z.iter().flatten().copied().collect();
    let quantizer = ZQuantizer::fit(&pooled, spec.z_bins)?;
    let paths = consumption
        .into_iter()
        .zip(flags)
        .zip(raw_z)
        .map(|((c, y), z)| {
            let zq = z.iter().map(|v| quantizer.quantize(*v)).collect();
            ScenarioPath::new(c, y, zq)
        })
        .collect::<Result<_>>()?;
    Ok(ScenarioSet { paths, quantizer })
}

/// Paths drawn from the model itself: DR flags from its chain, z i.i.d.
/// from its distribution, consumption the intrinsic baseline of each z.
pub fn model_paths(model: &Model, n_paths: usize, seed: u64, y0: bool) -> Result<Vec<ScenarioPath>> {
    let days = model.horizon.days();
    let flags = dr_sequences(days, &model.chain, n_paths, seed, y0);
    flags
        .into_iter()
        .enumerate()
        .map(|(p, y)| {
            let mut rng = stream_rng(seed, STREAM_Z, &[p as u64]);
            let z: Vec<f64> = (0..days).map(|_| model.z.values()[model.z.sample_index(&mut rng)]).collect();
            let a = z.iter().map(|z| model.params.intrinsic_baseline(*z)).collect::<Result<_>>()?;
            ScenarioPath::new(a, y, z)
        })
        .collect()
}

/// Writes `path_id,day,consumption_kwh,dr_flag,z`.
pub fn write_paths_csv<W: Write>(paths: &[ScenarioPath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "day", "consumption_kwh", "dr_flag", "z"])?;
    for (p, path) in paths.iter().enumerate() {
        for t in 0..path.days() {
            w.write_record([
                p.to_string(),
                t.to_string(),
                path.consumption[t].to_string(),
                (path.dr_flags[t] as u8).to_string(),
                path.z_values[t].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<paths>", e))?;
    Ok(())
}

pub fn read_paths_csv<R: Read>(reader: R) -> Result<Vec<ScenarioPath>> {
    #[derive(Deserialize)]
    struct Row {
        path_id: usize,
        day: usize,
        consumption_kwh: f64,
        dr_flag: u8,
        z: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut raw: Vec<(Vec<f64>, Vec<bool>, Vec<f64>)> = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::data(MODULE, format!("paths row {}: {e}", i + 1)))?;
        if row.path_id == raw.len() {
            raw.push(Default::default());
        }
        if row.path_id + 1 != raw.len() {
            return Err(Error::data(MODULE, format!("paths row {}: path ids must be contiguous", i + 1)));
        }
        let entry = raw.last_mut().expect("current path");
        if row.day != entry.0.len() {
            return Err(Error::data(MODULE, format!("paths row {}: days must be consecutive from 0", i + 1)));
        }
        entry.0.push(row.consumption_kwh);
        entry.1.push(row.dr_flag != 0);
        entry.2.push(row.z);
    }
    raw.into_iter().map(|(c, y, z)| ScenarioPath::new(c, y, z)).collect()
}

/// Affine map of `values` onto the given mean and maximum.
pub fn rescale_mean_max(values: &[f64], mean: f64, max: f64) -> Result<Vec<f64>> {
    let m = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(hi > m) {
        return Err(Error::data(MODULE, "rescaling needs a non-constant series"));
    }
    let k = (max - mean) / (hi - m);
    Ok(values.iter().map(|v| mean + k * (v - m)).collect())
}

/// Mean of the built-in morning-peak series, kWh.
pub const SYNTHETIC_MEAN: f64 = 2.96;
/// Peak of the built-in morning-peak series, kWh.
pub const SYNTHETIC_MAX: f64 = 7.18;

/// A 9:00 consumption series for `days` weekdays of a peak season: a seasonal
/// hump, a weekly cycle, AR(1) weather persistence and a few spike days,
/// rescaled to mean 2.96 kWh and maximum 7.18 kWh.
pub fn synthetic_base(days: usize, seed: u64) -> Result<Vec<f64>> {
    if days < 2 {
        return Err(Error::param(MODULE, "synthetic series needs at least two days"));
    }
    let mut rng = stream_rng(seed, STREAM_NOISE, &[u64::MAX]);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut weather = 0.0;
    let raw: Vec<f64> = (0..days)
        .map(|t| {
            let phase = t as f64 / (days - 1) as f64;
            let season = 1.0 + 0.35 * (std::f64::consts::PI * phase).sin();
            let weekly = [1.08, 1.0, 0.97, 0.99, 1.04][t % 5];
            weather = 0.6 * weather + 0.25 * normal.sample(&mut rng);
            let spike = if rng.gen::<f64>() < 0.05 { 0.8 } else { 0.0 };
            (season * weekly + weather + spike).max(0.05)
        })
        .collect();
    let scaled = rescale_mean_max(&raw, SYNTHETIC_MEAN, SYNTHETIC_MAX)?;
    Ok(scaled.into_iter().map(|v| v.max(0.0)).collect())
}
