use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cqsim_cli::{run_file, validate, RunOptions};

#[derive(Parser)]
#[command(name = "cqsim", version, about = "Two-level system in a classical thermal environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides [output].dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides [numerics].master_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for ensembles (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Also write SVG line charts.
        #[arg(long)]
        svg: bool,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let diags = validate(&text);
            if diags.is_empty() {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            } else {
                for d in diags {
                    eprintln!("{}: {d}", config.display());
                }
                ExitCode::from(2)
            }
        }
        Command::Run { config, out, seed, threads, svg } => match run_file(&config, &RunOptions { out, seed, threads, svg }) {
            Ok(summary) => {
                for w in &summary.warnings {
                    eprintln!("warning: {w}");
                }
                for f in &summary.files {
                    println!("wrote {}", f.display());
                }
                for c in &summary.checks {
                    println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                for line in e.to_string().lines() {
                    eprintln!("error: {line}");
                }
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
