use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfoc::runner::{self, RunResult};

/// Mean-field optimal control solver on the flat torus.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, certify and persist a run (output root: $MFOC_OUTPUT_ROOT).
    Solve { config: PathBuf },
    /// Check the standing assumptions and print the report.
    Validate { config: PathBuf },
    /// Particle checks against a finished run.
    Particles {
        config: PathBuf,
        #[arg(long)]
        from: PathBuf,
    },
    /// Optimality probe against a finished run.
    Probe {
        config: PathBuf,
        #[arg(long)]
        from: PathBuf,
    },
}

fn report(result: &RunResult) -> ExitCode {
    if let Some(dir) = &result.run_dir {
        eprintln!("run directory: {}", dir.display());
    }
    if let Some(msg) = &result.message {
        eprintln!("error: {msg}");
    }
    ExitCode::from(result.status.code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config } => report(&runner::run(&config)),
        Command::Validate { config } => {
            let result = runner::validate(&config);
            if let Some(a) = result.manifest.as_ref().and_then(|m| m.assumptions.as_ref()) {
                println!("{}", serde_json::to_string_pretty(a).expect("report serializes"));
            }
            report(&result)
        }
        Command::Particles { config, from } => {
            let result = runner::particles(&config, &from);
            if let Some(p) = result.manifest.as_ref().and_then(|m| m.particles.as_ref()) {
                println!("{}", serde_json::to_string_pretty(p).expect("report serializes"));
            }
            report(&result)
        }
        Command::Probe { config, from } => {
            let (result, probe) = runner::probe(&config, &from);
            if let Some(p) = probe {
                println!(
                    "min dE at eps={}: {:.3e}; slopes decreasing: {}",
                    p.settings.reference_epsilon, p.min_delta, p.slopes_decreasing
                );
            }
            report(&result)
        }
    }
}
