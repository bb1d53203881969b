use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ocrl::cli::{
    apply_env_overrides, apply_override, emit_config, list_capabilities, parse_config,
    run_experiment, validate_config, ExperimentConfig,
};
use ocrl::Result;

/// Seeded, reproducible optimal-control and RL experiments.
#[derive(Parser)]
#[command(name = "ocrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and print its summary.
    Run {
        config: String,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output path for the result table.
        #[arg(long)]
        out: Option<String>,
        /// Override the output format (csv or json).
        #[arg(long)]
        format: Option<String>,
    },
    /// List every solver and testbed key.
    List,
    /// Parse and check a config file without running it.
    Validate { config: String },
}

fn load_config(
    path: &str,
    seed: Option<u64>,
    out: Option<String>,
    format: Option<String>,
) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    apply_env_overrides(&mut cfg, std::env::vars())?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.out = Some(out);
    }
    if let Some(format) = format {
        apply_override(&mut cfg, "format", &format)?;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out, format } => {
            let cfg = load_config(&config, seed, out, format)?;
            let run = run_experiment(&cfg)?;
            if cfg.out.is_none() {
                print!("{}", run.artifact);
            }
            println!("{}", run.summary);
        }
        Command::List => print!("{}", list_capabilities()),
        Command::Validate { config } => {
            let cfg = load_config(&config, None, None, None)?;
            validate_config(&cfg)?;
            print!("{}", emit_config(&cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
