use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bates_hybrid::cli::{exit_code, run, smile_report, Overrides};

/// Hybrid tree/finite-difference and Monte Carlo option pricing under the
/// Bates and Bates-Hull-White models.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Monte Carlo seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV output path, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price every run entry of a config and write one CSV row per job.
    Price { config: PathBuf },
    /// Compute an implied-volatility smile from the config's [smile] block.
    Smile { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
    };
    let result = match &cli.command {
        Command::Price { config } => run(config, &overrides).map(|_| ()),
        Command::Smile { config } => smile_report(config, &overrides).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
