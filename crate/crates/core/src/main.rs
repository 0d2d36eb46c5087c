use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use concone::cli::{self, Command, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "concone", version, about = "Minimal graphs in conformal cones")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sampled checks of the profile conditions.
    CheckProfile { config: PathBuf },
    /// Dirichlet solve with curvature and barrier columns.
    Solve { config: PathBuf },
    /// Translating solves on caps of increasing radius.
    Sweep { config: PathBuf },
    /// Constant data rising to the top of the cone.
    Infinity { config: PathBuf },
    /// Radial shooting, optionally compared with a solve.
    Oracle { config: PathBuf },
    /// Random competitor test around a solve.
    Functional { config: PathBuf },
    /// Grid, boundary data and the resolved config.
    Export { config: PathBuf },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if let Ok(v) = std::env::var("CONCONE_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("concone: could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("concone: CONCONE_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        }
    }
    let (command, config) = match args.command {
        Cmd::CheckProfile { config } => (Command::CheckProfile, config),
        Cmd::Solve { config } => (Command::Solve, config),
        Cmd::Sweep { config } => (Command::Sweep, config),
        Cmd::Infinity { config } => (Command::Infinity, config),
        Cmd::Oracle { config } => (Command::Oracle, config),
        Cmd::Functional { config } => (Command::Functional, config),
        Cmd::Export { config } => (Command::Export, config),
    };
    match cli::run(command, &config) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("concone {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
