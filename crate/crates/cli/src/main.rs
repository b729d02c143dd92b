use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybridlab_cli::{catalog, configure_threads, run_to_disk, validate, CliError, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "hybridlab",
    version,
    about = "Quantum-classical hybrid dynamics experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List registered scenarios.
    List,
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::List => {
            for s in catalog() {
                println!("{:<24} {:<16} {}", s.name, s.module, s.description);
            }
        }
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            validate(&cfg)?;
            println!("{}: ok", cfg.name);
        }
        Command::Run { config, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let (dir, outcome) = run_to_disk(&cfg)?;
            println!("{}: wrote {}.json to {}", cfg.name, cfg.name, dir.display());
            for (name, _) in &outcome.artifacts {
                println!("  {name}");
            }
        }
    }
    Ok(())
}
