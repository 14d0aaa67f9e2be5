use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvch_cli::commands::EXIT_CONFIG;
use nvch_cli::{cmd_check, cmd_converge, cmd_run, parse_config, Failure, Options, RunConfig};

#[derive(Parser)]
#[command(name = "nvch", version, about = "Viscous Cahn-Hilliard time stepper")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides `output.dir`)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Suppress progress and summary output
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write CSV files and snapshots
    Run { config: PathBuf },
    /// Run a time-step refinement ladder and report observed orders
    Converge { config: PathBuf },
    /// Check discrete identities and invariants (defaults if no config)
    Check { config: Option<PathBuf> },
}

fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        tag: "io-error",
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut cfg = parse_config(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        out: cli.out,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Run { config } => load(Some(config)).and_then(|c| cmd_run(&c, &opts)),
        Command::Converge { config } => load(Some(config)).and_then(|c| cmd_converge(&c, &opts)),
        Command::Check { config } => load(config.as_deref()).and_then(|c| cmd_check(&c, &opts)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code as u8)
        }
    }
}
