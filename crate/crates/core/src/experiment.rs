//! End-to-end experiments: configuration, the fit → scenarios → solve →
//! report pipeline, and run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{BaselineMethod, ConsumptionWindow, DrProgram, Truncation};
use crate::dp::{self, ActionGrid, GridIntrinsicPolicy, SolveOptions};
use crate::error::{Error, Result};
use crate::mdp::{DrChain, Horizon, IntrinsicPolicy, Model, State};
use crate::check::CheckReport;
use crate::metrics::{manipulation_curve, read_curve_csv, single_peak_check, write_curve_csv, ManipulationCurve};
use crate::rollout::{fit_theta, fit_theta_schedule, Feature, LinearHeuristic, RolloutConfig, RolloutPolicy};
use crate::scenario::{self, HistoryFilter, ScenarioSet, ScenarioSpec};
use crate::utility::{estimate_params_with_cap, UtilityParams, DEFAULT_CAP_FACTOR, DEFAULT_U_CHECK};

const MODULE: &str = "experiment";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    #[serde(alias = "exact_dp")]
    Exact,
    Rollout,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_dp" => Ok(Solver::Exact),
            "rollout" => Ok(Solver::Rollout),
            other => Err(Error::param(MODULE, format!("unknown solver `{other}`, expected exact or rollout"))),
        }
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Exact => "exact",
            Solver::Rollout => "rollout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    High,
    Low,
    Mid,
    ApproxHigh,
}

/// Experiment settings. Every field has a default; a JSON file only needs
/// the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV with `timestamp,kwh`; the built-in synthetic series when absent.
    pub history: Option<PathBuf>,
    /// One ISO date per line.
    pub holidays: Option<PathBuf>,
    pub dr_hour: u32,
    pub synthetic_seed: u64,
    /// Days per path, T.
    pub horizon: usize,
    pub p0: f64,
    pub p1: f64,
    pub snr_db: f64,
    pub z_bins: usize,
    pub method: MethodName,
    pub y: usize,
    /// Defaults to every valid X in `1..=Y`.
    pub xs: Option<Vec<usize>>,
    pub rebates: Vec<f64>,
    pub omega: f64,
    pub u_check: f64,
    pub cap_factor: f64,
    pub action_points: usize,
    pub theta_step: f64,
    /// Fit one heuristic slope per day instead of a single slope.
    pub per_stage_theta: bool,
    pub n_paths: usize,
    pub n_fit_paths: usize,
    pub n_eval_paths: usize,
    pub solver: Solver,
    /// Largest Y accepted by the exact solver.
    pub dp_max_y: usize,
    pub memory_budget_mib: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            history: None,
            holidays: None,
            dr_hour: 9,
            synthetic_seed: 0,
            horizon: 93,
            p0: 0.2,
            p1: 0.4,
            snr_db: 3.0,
            z_bins: 3,
            method: MethodName::High,
            y: 5,
            xs: None,
            rebates: vec![0.12],
            omega: 0.12,
            u_check: DEFAULT_U_CHECK,
            cap_factor: DEFAULT_CAP_FACTOR,
            action_points: 10,
            theta_step: 0.001,
            per_stage_theta: false,
            n_paths: 100,
            n_fit_paths: 10,
            n_eval_paths: 100,
            solver: Solver::Exact,
            dp_max_y: 5,
            memory_budget_mib: 2048,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::data(MODULE, format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("history", &self.history), ("holidays", &self.holidays)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::data(MODULE, format!("{name} file {} does not exist", p.display())));
                }
            }
        }
        Horizon::new(self.horizon)?;
        DrChain::new(self.p0, self.p1)?;
        if self.y == 0 {
            return Err(Error::param(MODULE, "Y must be at least 1"));
        }
        if self.rebates.is_empty() || self.rebates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::param(MODULE, "rebates must be a non-empty list of prices >= 0"));
        }
        for x in self.x_values()? {
            self.program(x, self.rebates[0])?;
        }
        if !(self.theta_step > 0.0 && self.theta_step <= 1.0) {
            return Err(Error::param(MODULE, "theta_step must lie in (0, 1]"));
        }
        if self.n_paths == 0 || self.z_bins == 0 {
            return Err(Error::param(MODULE, "n_paths and z_bins must be positive"));
        }
        RolloutConfig { n_fit_paths: self.n_fit_paths, n_eval_paths: self.n_eval_paths, seed: self.seed }.validate()?;
        if !(2..=255).contains(&self.action_points) {
            return Err(Error::param(MODULE, "action_points must lie in 2..=255"));
        }
        if self.solver == Solver::Exact && self.y > self.dp_max_y {
            return Err(Error::resource(
                MODULE,
                format!("exact solver is capped at Y={} but Y={}; use --solver rollout or raise dp_max_y", self.dp_max_y, self.y),
            ));
        }
        Ok(())
    }

    pub fn x_values(&self) -> Result<Vec<usize>> {
        let xs = match &self.xs {
            Some(xs) => xs.clone(),
            None => (1..=self.y)
                .filter(|x| self.method != MethodName::Mid || (self.y - x).is_multiple_of(2))
                .collect(),
        };
        if xs.is_empty() {
            return Err(Error::param(MODULE, "no X values to evaluate"));
        }
        Ok(xs)
    }

    pub fn program_for(&self, x: usize, rebate: f64, a_hat: f64) -> Result<DrProgram> {
        let method = match self.method {
            MethodName::High => BaselineMethod::HighXofY,
            MethodName::Low => BaselineMethod::LowXofY,
            MethodName::Mid => BaselineMethod::MidXofY,
            MethodName::ApproxHigh => BaselineMethod::ApproxHighXofY(Truncation::physical(a_hat)),
        };
        DrProgram::new(method, x, self.y, rebate)
    }

    fn program(&self, x: usize, rebate: f64) -> Result<DrProgram> {
        self.program_for(x, rebate, 1.0)
    }

    pub fn theta_grid(&self) -> Vec<f64> {
        let n = (1.0 / self.theta_step).round() as usize;
        (0..=n).map(|i| (i as f64 * self.theta_step).min(1.0)).collect()
    }

    pub fn chain(&self) -> DrChain {
        DrChain { p0: self.p0, p1: self.p1 }
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        ScenarioSpec { n_paths: self.n_paths, snr_db: self.snr_db, chain: self.chain(), y0: false, z_bins: self.z_bins }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// The consumption series the experiment starts from: the configured
/// history, or the synthetic morning-peak series.
pub fn load_base(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    match &cfg.history {
        Some(path) => {
            let holidays = match &cfg.holidays {
                Some(h) => scenario::load_holidays(h)?,
                None => Default::default(),
            };
            let filter = HistoryFilter { hour: cfg.dr_hour, weekdays_only: true, holidays, season_days: Some(cfg.horizon) };
            let recs = scenario::load_history(path, &filter)?;
            if recs.len() < cfg.horizon {
                return Err(Error::data(
                    MODULE,
                    format!("{} has {} usable days, the horizon needs {}", path.display(), recs.len(), cfg.horizon),
                ));
            }
            Ok(recs.iter().map(|r| r.kwh).collect())
        }
        None => scenario::synthetic_base(cfg.horizon, cfg.synthetic_seed),
    }
}

pub fn fit_utility(cfg: &ExperimentConfig) -> Result<(Vec<f64>, UtilityParams)> {
    let base = load_base(cfg)?;
    let params = estimate_params_with_cap(&base, cfg.omega, cfg.u_check, cfg.cap_factor)?;
    Ok((base, params))
}

/// Everything a curve computation needs, built once per run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: UtilityParams,
    pub scenarios: ScenarioSet,
    pub grid: ActionGrid,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let (base, params) = fit_utility(cfg)?;
        let scenarios = scenario::build_scenarios(&base, &cfg.scenario_spec(), &params, cfg.seed)?;
        let grid = ActionGrid::uniform(params.a_hat, cfg.action_points)?;
        Ok(Self { params, scenarios, grid })
    }

    pub fn model(&self, cfg: &ExperimentConfig, x: usize, rebate: f64) -> Result<Model> {
        Ok(Model {
            horizon: Horizon::new(cfg.horizon)?,
            program: cfg.program_for(x, rebate, self.params.a_hat)?,
            params: self.params,
            chain: cfg.chain(),
            z: self.scenarios.quantizer.distribution.clone(),
        })
    }

    /// Every path starts from `Y` days of mean consumption; the exact solver
    /// snaps it to the grid.
    pub fn initial_window(&self, cfg: &ExperimentConfig, solver: Solver) -> Result<ConsumptionWindow> {
        let a = self.params.intrinsic_baseline(1.0)?;
        let a = match solver {
            Solver::Exact => self.grid.snap(a),
            Solver::Rollout => a,
        };
        ConsumptionWindow::constant(a, cfg.y)
    }

    /// Median support point of the z distribution, the start-day z used to
    /// fit the heuristic.
    fn start_z(&self) -> f64 {
        let v = self.scenarios.quantizer.distribution.values();
        v[(v.len() - 1) / 2]
    }
}

/// Manipulation curve over `X` for one rebate price. The second element
/// lists the fitted heuristic slopes per `X` (rollout only): one slope, or
/// one per day with `per_stage_theta`.
pub fn curve_for(cfg: &ExperimentConfig, setup: &Setup, rebate: f64, solver: Solver) -> Result<(ManipulationCurve, Vec<(usize, Vec<f64>)>)> {
    let xs = cfg.x_values()?;
    let model = setup.model(cfg, xs[0], rebate)?;
    let w0 = setup.initial_window(cfg, solver)?;
    let paths = &setup.scenarios.paths;
    match solver {
        Solver::Exact => {
            let options = SolveOptions { keep_values: false, memory_budget_bytes: cfg.memory_budget_mib << 20 };
            let intrinsic = GridIntrinsicPolicy::new(setup.grid.clone(), setup.params);
            let curve = manipulation_curve(
                &model,
                &xs,
                |m| dp::solve(m, &setup.grid, &w0, options),
                &intrinsic,
                paths,
                &w0,
            )?;
            Ok((curve, Vec::new()))
        }
        Solver::Rollout => {
            let rc = RolloutConfig { n_fit_paths: cfg.n_fit_paths, n_eval_paths: cfg.n_eval_paths, seed: cfg.seed };
            let theta_grid = cfg.theta_grid();
            let start = State::new(w0.clone(), false, setup.start_z())?;
            let mut thetas = Vec::new();
            let intrinsic = IntrinsicPolicy { params: setup.params };
            let curve = manipulation_curve(
                &model,
                &xs,
                |m| {
                    let h = if cfg.per_stage_theta {
                        let s = fit_theta_schedule(m, &start, Feature::WindowMax, &rc, &theta_grid)?;
                        LinearHeuristic::staged(s, Feature::WindowMax)?
                    } else {
                        LinearHeuristic::new(fit_theta(m, &start, 0, Feature::WindowMax, &rc, &theta_grid)?, Feature::WindowMax)?
                    };
                    log::info!("X={}: fitted theta {}", m.program.x(), h.theta());
                    thetas.push((m.program.x(), h.schedule().map_or_else(|| vec![h.theta()], <[f64]>::to_vec)));
                    RolloutPolicy::new(m.clone(), h, rc, setup.grid.clone())
                },
                &intrinsic,
                paths,
                &w0,
            )?;
            Ok((curve, thetas))
        }
    }
}

pub fn curve_file_name(y: usize, rebate: f64) -> String {
    format!("curve_Y{y}_r{rebate}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub solver: Solver,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fits the utility, writes `params.json` and returns the parameters.
pub fn cmd_fit_utility(cfg: &ExperimentConfig) -> Result<UtilityParams> {
    cfg.validate()?;
    let (base, params) = fit_utility(cfg)?;
    log::info!("fitted on {} days: mean {:.4} kWh", base.len(), base.iter().sum::<f64>() / base.len() as f64);
    create_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("params.json"), &params)?;
    Ok(params)
}

/// Writes `paths.csv` and `z_distribution.json`.
pub fn cmd_gen_paths(cfg: &ExperimentConfig) -> Result<ScenarioSet> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    create_out_dir(&cfg.out_dir)?;
    scenario::write_paths_csv(&setup.scenarios.paths, create_file(&cfg.out_dir.join("paths.csv"))?)?;
    write_json(&cfg.out_dir.join("z_distribution.json"), &setup.scenarios.quantizer)?;
    Ok(setup.scenarios)
}

/// Full pipeline: one manipulation curve per rebate price, plus the fitted
/// parameters and a manifest hashing every output.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    create_out_dir(&cfg.out_dir)?;
    let mut files = vec!["params.json".to_string()];
    write_json(&cfg.out_dir.join("params.json"), &setup.params)?;
    for &r in &cfg.rebates {
        let (curve, thetas) = curve_for(cfg, &setup, r, cfg.solver)?;
        let name = curve_file_name(cfg.y, r);
        write_curve_csv(&curve, create_file(&cfg.out_dir.join(&name))?)?;
        files.push(name);
        if !thetas.is_empty() {
            let name = format!("theta_Y{}_r{r}.csv", cfg.y);
            let mut w = csv::Writer::from_writer(create_file(&cfg.out_dir.join(&name))?);
            w.write_record(["X", "day", "theta"])?;
            for (x, ts) in thetas {
                // A single slope applies to every day.
                if let [t] = ts[..] {
                    w.write_record([x.to_string(), "all".to_string(), t.to_string()])?;
                } else {
                    for (d, t) in ts.iter().enumerate() {
                        w.write_record([x.to_string(), d.to_string(), t.to_string()])?;
                    }
                }
            }
            w.flush().map_err(|e| Error::io(cfg.out_dir.join(&name), e))?;
            files.push(name);
        }
    }
    let mut outputs = BTreeMap::new();
    for f in files {
        outputs.insert(f.clone(), sha256_file(&cfg.out_dir.join(&f))?);
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        solver: cfg.solver,
        config_sha256: cfg.digest(),
        config: cfg.clone(),
        outputs,
    };
    write_json(&cfg.out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Runs every invariant suite with `cases` random cases per property and
/// writes `validation.json`.
pub fn cmd_validate(cfg: &ExperimentConfig, cases: usize) -> Result<Vec<CheckReport>> {
    cfg.validate()?;
    let reports = crate::validate::run_all(cases, cfg.seed)?;
    create_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("validation.json"), &reports)?;
    Ok(reports)
}

/// Shape summary of one curve file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub file: String,
    pub curve: ManipulationCurve,
    pub single_peaked: bool,
    /// X at the peak of the manipulation curve.
    pub peak_x: usize,
    pub bias_no_dr_non_increasing: bool,
}

impl std::fmt::Display for CurveSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.file)?;
        writeln!(f, "  {:>3} {:>12} {:>12} {:>12} {:>9}", "X", "bias_no_dr", "bias_dr", "manipulation", "stderr")?;
        for p in &self.curve.points {
            writeln!(
                f,
                "  {:>3} {:>12.3} {:>12.3} {:>12.3} {:>9.3}",
                p.x, p.bias_no_dr, p.bias_dr, p.manipulation, p.stderr
            )?;
        }
        write!(
            f,
            "  single-peaked: {} (peak at X={}), bias without DR non-increasing: {}",
            self.single_peaked, self.peak_x, self.bias_no_dr_non_increasing
        )
    }
}

pub fn summarize_curve(file: impl Into<String>, curve: ManipulationCurve) -> CurveSummary {
    let (single_peaked, peak) = single_peak_check(&curve.manipulation());
    let peak_x = curve.points.get(peak.saturating_sub(1)).map_or(0, |p| p.x);
    let bias = curve.bias_no_dr();
    let bias_no_dr_non_increasing = bias.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    CurveSummary { file: file.into(), curve, single_peaked, peak_x, bias_no_dr_non_increasing }
}

/// Reads every `curve_*.csv` in `dir`, sorted by file name.
pub fn cmd_report(dir: &Path) -> Result<Vec<CurveSummary>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("curve_") && n.ends_with(".csv"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::data(MODULE, format!("no curve_*.csv files in {}", dir.display())));
    }
    names
        .into_iter()
        .map(|n| {
            let path = dir.join(&n);
            let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            Ok(summarize_curve(n, read_curve_csv(file)?))
        })
        .collect()
}
