use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tsn5g::Duration;
use tsn5g_cli::{cmd_analyze, cmd_run, cmd_sweep, CliError, WindowMode};

#[derive(Parser)]
#[command(
    name = "tsn5g",
    version,
    about = "Simulate TSN traffic carried over a 5G bridge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Proportional,
    Fixed,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its capture and report CSVs.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Periodicity report for an existing capture CSV.
    Analyze {
        capture: PathBuf,
        #[arg(long)]
        period: Duration,
        #[arg(long)]
        tol: Duration,
    },
    /// Re-run a scenario over several base periods.
    Sweep {
        config: PathBuf,
        /// Comma-separated, e.g. 200ms,100ms,50ms,40ms
        #[arg(long, value_delimiter = ',', required = true)]
        bases: Vec<Duration>,
        #[arg(long, value_enum, default_value = "proportional")]
        window: WindowArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 1 runs sequentially.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out_dir,
        } => Ok(cmd_run(&config, seed, &out_dir)?.render()),
        Command::Analyze {
            capture,
            period,
            tol,
        } => cmd_analyze(&capture, period, tol),
        Command::Sweep {
            config,
            bases,
            window,
            seed,
            jobs,
            out_dir,
        } => {
            let mode = match window {
                WindowArg::Proportional => WindowMode::Proportional,
                WindowArg::Fixed => WindowMode::Fixed,
            };
            if jobs == Some(0) {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            let out = cmd_sweep(&config, &bases, mode, seed, jobs, &out_dir)?;
            Ok(format!("{}sweep: {}\n", out.csv, out.sweep_path.display()))
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tsn5g: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
