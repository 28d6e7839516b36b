//! Benchmark runner: writes one CSV row per measurement.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heapsse::bench::{run_to_file, BenchConfig};

#[derive(Parser)]
#[command(name = "bench", version, about = "Timing and size measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suite described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let Command::Run { config, out } = cli.command;
    let cfg = match std::fs::read_to_string(&config)
        .map_err(|e| e.to_string())
        .and_then(|t| BenchConfig::from_toml(&t).map_err(|e| e.to_string()))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    match run_to_file(&cfg, &out) {
        Ok(rows) => {
            println!("wrote {} rows to {}", rows.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
