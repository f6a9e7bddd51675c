use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drbaseline::experiment::{self, ExperimentConfig, Solver};
use drbaseline::validate;

#[derive(Parser)]
#[command(name = "drbaseline", version, about = "Baseline manipulation experiments for demand response programs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true, env = "DRB_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, env = "DRB_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "DRB_OUT")]
    out: Option<PathBuf>,
    /// exact or rollout.
    #[arg(long, global = true, env = "DRB_SOLVER")]
    solver: Option<Solver>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the utility parameters and write params.json.
    FitUtility,
    /// Generate scenario paths and write paths.csv.
    GenPaths,
    /// Run the full experiment and write the manipulation curves.
    Run,
    /// Run the invariant suites.
    Validate {
        /// Random cases per property.
        #[arg(long, default_value_t = 10_000, env = "DRB_CASES")]
        cases: usize,
        /// Rerun every property on one reported case seed.
        #[arg(long)]
        replay: Option<u64>,
    },
    /// Summarize the curve files in the output directory.
    Report {
        /// Directory to read instead of the output directory.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> drbaseline::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(solver) = common.solver {
        cfg.solver = solver;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> drbaseline::Result<u8> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::FitUtility => {
            let p = experiment::cmd_fit_utility(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&p)?);
        }
        Command::GenPaths => {
            let set = experiment::cmd_gen_paths(&cfg)?;
            println!("{} paths written to {}", set.paths.len(), cfg.out_dir.display());
            println!("z values {:?}", set.quantizer.distribution.values());
        }
        Command::Run => {
            let manifest = experiment::cmd_run(&cfg)?;
            for name in manifest.outputs.keys() {
                println!("{}", cfg.out_dir.join(name).display());
            }
        }
        Command::Validate { replay: Some(seed), .. } => {
            let mut failed = false;
            for r in validate::replay(seed) {
                match (r.violation, r.soft) {
                    (None, _) => println!("[PASS] {}", r.name),
                    (Some(msg), true) => println!("[SOFT] {}: {msg}", r.name),
                    (Some(msg), false) => {
                        failed = true;
                        println!("[FAIL] {}: {msg}", r.name);
                    }
                }
            }
            return Ok(u8::from(failed));
        }
        Command::Validate { cases, replay: None } => {
            let reports = experiment::cmd_validate(&cfg, cases)?;
            for r in &reports {
                println!("{r}");
            }
            return Ok(u8::from(reports.iter().any(|r| !r.passed())));
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| cfg.out_dir.clone());
            for s in experiment::cmd_report(&dir)? {
                println!("{s}");
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DRB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
