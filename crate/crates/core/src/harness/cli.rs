use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::config::{ExperimentConfig, SweepConfig, TargetSpec};
use super::plot::{emit_plot, YScale};
use super::run::{run_experiment, run_sweep};
use crate::diagnostics::{cache_dir, reference_statistics_cached, IntegrationConfig};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "flowsampler", version, about = "Gradient-flow sampling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetKindArg {
    Gaussian,
    Logconcave,
    Rosenbrock,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a family of experiments, either from overrides in the config or over λ values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        /// Concurrent experiments (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print reference statistics of a benchmark target as JSON.
    Reference {
        #[arg(long)]
        target: TargetKindArg,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        probe_seed: u64,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Plot trajectory CSVs matching a glob into one SVG.
    Plot {
        #[arg(long)]
        input: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        log_y: bool,
    },
}

/// Prints one line to stdout; a closed pipe is not an error.
fn emit(line: &dyn std::fmt::Display) -> Result<()> {
    match writeln!(std::io::stdout(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            run_experiment(&cfg).map_err(|e| e.context(config.display().to_string()))?;
            emit(&cfg.output_path().display())?;
        }
        Command::Sweep {
            config,
            lambda,
            workers,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut sweep = SweepConfig::from_json(&text).map_err(|e| e.context(config.display().to_string()))?;
            if !lambda.is_empty() {
                sweep = sweep.with_lambdas(&lambda);
            }
            let runs = sweep.expand().map_err(|e| e.context(config.display().to_string()))?;
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            run_sweep(&runs, workers).map_err(|e| e.context(config.display().to_string()))?;
            for r in &runs {
                emit(&r.output_path().display())?;
            }
        }
        Command::Reference {
            target,
            lambda,
            probe_seed,
            points,
        } => {
            let spec = match target {
                TargetKindArg::Gaussian => TargetSpec::Gaussian { lambda },
                TargetKindArg::Logconcave => TargetSpec::Logconcave { lambda },
                TargetKindArg::Rosenbrock => TargetSpec::Rosenbrock { lambda },
            };
            let model = spec.build()?;
            let cfg = IntegrationConfig {
                points: points.unwrap_or(IntegrationConfig::default().points),
                interval: None,
            };
            let stats = reference_statistics_cached(&model, probe_seed, &cfg, &cache_dir())?;
            emit(&stats.to_json()?)?;
        }
        Command::Plot { input, output, log_y } => {
            let paths: Vec<PathBuf> = glob::glob(&input)
                .map_err(|e| Error::Config(format!("bad glob {input:?}: {e}")))?
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Io(std::io::Error::from(e)))?;
            if paths.is_empty() {
                return Err(Error::Format(format!("no files match {input:?}")));
            }
            let scale = if log_y { YScale::Log } else { YScale::Linear };
            emit_plot(&paths, &output, scale)?;
            emit(&output.display())?;
        }
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code
/// (0 success, 2 configuration/input error, 3 numerical failure).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
