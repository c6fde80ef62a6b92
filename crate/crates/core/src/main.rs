use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oscnet::cli::{cmd_bench, cmd_integrate, cmd_train, CliError};

/// Physics-informed network solver for the nonlinear MEMS beam oscillator.
#[derive(Parser)]
#[command(name = "oscnet", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Write outputs here instead of `output.directory` from the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and compare it against the reference integrator.
    Train { config: PathBuf },
    /// Run only the reference integrator.
    Integrate { config: PathBuf },
    /// Train all five activations and tabulate epochs to threshold.
    Bench { config: PathBuf },
}

fn run(args: Args) -> Result<(), CliError> {
    let out = args.out_dir.as_deref();
    match args.command {
        Command::Train { config } => {
            let dir = cmd_train(&config, out)?;
            println!("wrote run to {}", dir.display());
        }
        Command::Integrate { config } => {
            let path = cmd_integrate(&config, out)?;
            println!("wrote trace to {}", path.display());
        }
        Command::Bench { config } => {
            let (path, rows) = cmd_bench(&config, out)?;
            for row in &rows {
                println!("{}", row.to_csv_line());
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
