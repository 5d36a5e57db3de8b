//! `kio`: simulate gait datasets, run the KIO filter variants, evaluate and compare them.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kio_core::kio::FilterVariant;
use kio_core::pipeline::{
    cmd_compare, cmd_evaluate, cmd_monte_carlo, cmd_run, cmd_simulate, Config, Metric, PipelineError, RunConfig,
};

#[derive(Parser)]
#[command(name = "kio", version, about = "Kinematic-inertial odometry filters on matrix Lie groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic walking dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run one filter variant over a dataset and write its run record.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        variant: Option<FilterVariant>,
        /// Start at the true state instead of sampling the prior.
        #[arg(long)]
        exact_init: bool,
        /// Store full covariance matrices in the record.
        #[arg(long)]
        full_covariance: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a run record, or with `--runs N` a Monte-Carlo batch.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "runs")]
        record: Option<PathBuf>,
        #[arg(long, required_unless_present = "runs")]
        dataset: Option<PathBuf>,
        /// Monte-Carlo repetitions of simulate, run and evaluate.
        #[arg(long)]
        runs: Option<usize>,
        /// Variant for Monte-Carlo mode (all four when omitted).
        #[arg(long)]
        variant: Option<FilterVariant>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tabulate several run records made from one dataset.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "variant")]
        sort_by: Metric,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<Config, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_written(path: Option<&Path>) {
    if let Some(p) = path {
        println!("report written to {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Simulate { common, output } => {
            let cfg = load_config(&common)?;
            println!("{}", cmd_simulate(&cfg, &output)?);
        }
        Command::Run { common, dataset, variant, exact_init, full_covariance, output } => {
            let mut cfg = load_config(&common)?;
            cfg.run.dataset = dataset.or(cfg.run.dataset);
            cfg.run.output = output.or(cfg.run.output);
            cfg.run.variant = variant.unwrap_or(cfg.run.variant);
            cfg.run.exact_init |= exact_init;
            cfg.run.full_covariance |= full_covariance;
            println!("{}", cmd_run(&RunConfig::from_config(&cfg)?)?);
        }
        Command::Evaluate { common, record, dataset, runs, variant, output } => {
            let cfg = load_config(&common)?;
            match (runs, record, dataset) {
                (Some(n), None, None) => {
                    let variants = variant.map_or(FilterVariant::ALL.to_vec(), |v| vec![v]);
                    print!("{}", cmd_monte_carlo(&cfg, &variants, n, output.as_deref())?);
                }
                (None, Some(record), Some(dataset)) => {
                    let (q, w) = (cfg.eval.quantile, cfg.eval.rpe_window);
                    println!("{}", cmd_evaluate(&record, &dataset, q, w, output.as_deref())?);
                }
                _ => {
                    return Err(PipelineError::config(
                        "evaluate",
                        "give either --runs, or --record with --dataset".into(),
                    ))
                }
            }
            print_written(output.as_deref());
        }
        Command::Compare { common, dataset, sort_by, output, records } => {
            let cfg = load_config(&common)?;
            let (q, w) = (cfg.eval.quantile, cfg.eval.rpe_window);
            println!("{}", cmd_compare(&records, &dataset, q, w, sort_by, output.as_deref())?);
            print_written(output.as_deref());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
