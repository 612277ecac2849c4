use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use obsplan_cli::manifest::{RunManifest, MANIFEST_NAME};
use obsplan_cli::runner::{run_single, run_sweep, RunOptions, Stage};
use obsplan_cli::{fixtures, plot, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "obsplan", version, about = "Plan mobile sensor trajectories and evaluate them with a Kalman filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory; overrides `outputs` in the config.
    #[arg(long, env = "OBSPLAN_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Also write per-step planner scores as plan_report.csv.
    #[arg(long)]
    plan_report: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Plan (or place) the sensors and write the trajectory and condition report.
    Plan(RunArgs),
    /// Plan, then run the Kalman filter and write the error curves.
    Filter(RunArgs),
    /// Run every point of the config's sweep grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Worker threads; overrides `workers` in the config.
        #[arg(long, env = "OBSPLAN_WORKERS")]
        workers: Option<usize>,
    },
    /// Render SVG plots for a finished run directory.
    Plot { dir: PathBuf },
    /// Re-hash every file listed in a run's manifest.
    Verify { dir: PathBuf },
    /// Write the desk-scale fixture configs and data into a directory.
    Fixtures { dir: PathBuf },
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let out = args.output_dir.clone().unwrap_or_else(|| cfg.outputs.clone());
    Ok((cfg, out))
}

fn verify(dir: &Path) -> Result<(), CliError> {
    let m = RunManifest::load(&dir.join(MANIFEST_NAME))?;
    let bad = m.verify(dir);
    for (path, why) in &bad {
        eprintln!("MISMATCH {path}: {why}");
    }
    if bad.is_empty() {
        println!("ok: {} files verified", m.files.len());
        Ok(())
    } else {
        Err(CliError::Schema(format!("{} of {} files failed verification", bad.len(), m.files.len())))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan(args) => {
            let (cfg, out) = load(&args)?;
            let opts = RunOptions { plan_report: args.plan_report };
            let m = run_single(&cfg, Stage::Plan, &opts, &out)?;
            println!("wrote {} files to {}", m.files.len(), out.display());
        }
        Command::Filter(args) => {
            let (cfg, out) = load(&args)?;
            let opts = RunOptions { plan_report: args.plan_report };
            let m = run_single(&cfg, Stage::Filter, &opts, &out)?;
            println!("wrote {} files to {}", m.files.len(), out.display());
        }
        Command::Sweep { run, workers } => {
            let (cfg, out) = load(&run)?;
            let opts = RunOptions { plan_report: run.plan_report };
            let workers = workers
                .or(cfg.workers)
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            if workers == 0 {
                return Err(CliError::Config("workers must be at least 1".into()));
            }
            let m = run_sweep(&cfg, &opts, &out, workers)?;
            println!("wrote {} files to {}", m.files.len(), out.display());
            if let Some(first) = m.failures.first() {
                for f in &m.failures {
                    eprintln!("point {} failed: {}", f.point, f.message);
                }
                return Err(CliError::PointsFailed {
                    failed: m.failures.len(),
                    code: first.exit_code,
                });
            }
        }
        Command::Plot { dir } => {
            for p in plot::emit_plots(&dir)? {
                println!("{}", p.display());
            }
        }
        Command::Verify { dir } => verify(&dir)?,
        Command::Fixtures { dir } => {
            for p in fixtures::write_fixtures(&dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
