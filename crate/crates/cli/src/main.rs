use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radnet_core::experiment::Format;

mod manifest;
mod stages;

#[derive(Debug, Parser)]
#[command(name = "radnet", version, about = "Learn radial network topology from corrupted time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML or JSON); a sweep config for `sweep`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory. Defaults to the config's `outputs.dir`, then `radnet-out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for sweeps.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output formats; repeat or separate with commas.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_format)]
    format: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate the clean node streams.
    Simulate,
    /// Corrupt the simulated streams.
    Corrupt,
    /// Estimate (or compute exactly) the spectrum of the corrupted streams.
    Spectra,
    /// Detect corrupt nodes and leaves.
    Detect,
    /// Reconstruct the topology.
    Learn,
    /// All five stages in order.
    Pipeline,
    /// Random-instance recovery sweep.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Corrupt => "corrupt",
            Command::Spectra => "spectra",
            Command::Detect => "detect",
            Command::Learn => "learn",
            Command::Pipeline => "pipeline",
            Command::Sweep => "sweep",
        }
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: radnet_core::Error| e.to_string())
}

pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub formats: Vec<Format>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let opts = Options {
        config,
        out: cli.out,
        seed: cli.seed,
        threads: cli
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        formats: cli.format,
    };
    if opts.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    match stages::run(cli.command, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
