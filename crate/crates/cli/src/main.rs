use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lhe_cli::commands::{self, AnalyzeOptions, CONFIG_ECHO};
use lhe_cli::config::load_with_overrides;
use lhe_cli::{CliError, CliResult};
use lhe_core::analysis::DistanceAggregation;

#[derive(Parser)]
#[command(name = "lhe", version, about = "Learning to drop heterophilious edges for graph neural networks")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` experiment configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override or add a configuration key, e.g. `--set mode=end_to_end`.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long, default_value_t = lhe_core::analysis::DEFAULT_BINS)]
    bins: usize,
    /// Largest connected component diagonalized densely.
    #[arg(long, default_value_t = lhe_core::analysis::DEFAULT_DENSE_LIMIT)]
    dense_limit: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with one mask file per run.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; defaults to `out_dir` from the config.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train over all splits and write reports plus a summary.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Re-run a single split only.
        #[arg(long)]
        run: Option<usize>,
    },
    /// Deletion, distance and spectrum statistics for a run directory.
    Analyze {
        run_dir: PathBuf,
        /// Override keys of the directory's config echo.
        #[arg(short, long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Pool per-edge distances instead of averaging class pairs.
        #[arg(long)]
        per_edge: bool,
        #[arg(long)]
        skip_spectrum: bool,
    },
    /// Eigenvalues of the normalized adjacency.
    Eigen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        spectrum: SpectrumArgs,
        /// Apply the keep mask of this run report first.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Dataset statistics.
    Info {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn dispatch(command: Command) -> CliResult<String> {
    match command {
        Command::Generate { cfg, out } => {
            let c = load_with_overrides(cfg.config.as_deref(), &cfg.set)?;
            let out = out.unwrap_or_else(|| c.out_dir.clone());
            commands::generate(&c, &out)
        }
        Command::Train { cfg, run } => commands::train(&load_with_overrides(cfg.config.as_deref(), &cfg.set)?, run),
        Command::Analyze { run_dir, set, spectrum, tau, per_edge, skip_spectrum } => {
            let c = load_with_overrides(Some(&run_dir.join(CONFIG_ECHO)), &set)?;
            let options = AnalyzeOptions {
                bins: spectrum.bins,
                dense_limit: spectrum.dense_limit,
                tau,
                aggregation: if per_edge { DistanceAggregation::PerEdge } else { DistanceAggregation::PairMeans },
                spectrum: !skip_spectrum,
            };
            commands::analyze(&run_dir, &c, &options)
        }
        Command::Eigen { cfg, spectrum, report, out } => {
            let c = load_with_overrides(cfg.config.as_deref(), &cfg.set)?;
            let options = AnalyzeOptions { bins: spectrum.bins, dense_limit: spectrum.dense_limit, ..AnalyzeOptions::default() };
            let out = out.unwrap_or_else(|| c.out_dir.clone());
            commands::eigen(&c, report.as_deref(), &options, &out)
        }
        Command::Info { cfg } => commands::info(&load_with_overrides(cfg.config.as_deref(), &cfg.set)?),
    }
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
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
