use std::path::PathBuf;
use std::process::ExitCode;

use chetaev_runner::{exit_code, load, parse_config, run, scenarios, LoadError, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chetaev-lab", version, about = "Run quantum/classical stability scenarios")]
struct Cli {
    /// Output root; the run writes into <out>/<output.directory>.
    #[arg(long, global = true, env = "CHETAEV_LAB_OUT")]
    out: Option<PathBuf>,
    /// Override [analysis] seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a built-in scenario id.
    Run { target: String },
    /// List the built-in scenarios.
    ListScenarios,
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListScenarios => {
            for s in scenarios::SCENARIOS {
                println!("{:<22} {}", s.id, s.description);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            match parse_config(&text) {
                Ok(_) => {
                    if !cli.quiet {
                        println!("{}: ok", config.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Run { target } => {
            let mut cfg = match load(&target) {
                Ok(c) => c,
                Err(e @ (LoadError::Unknown { .. } | LoadError::Invalid(_))) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = cli.seed {
                cfg.analysis.seed = seed;
            }
            let opts = RunOptions {
                out_root: cli.out.unwrap_or_else(|| PathBuf::from(".")),
                quiet: cli.quiet,
            };
            match run(&cfg, &opts) {
                Ok(outcome) => {
                    if !cli.quiet {
                        println!("{}: {:?}", outcome.manifest_path().display(), outcome.status);
                    }
                    ExitCode::from(exit_code(outcome.status) as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
