use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use energy_coop::cli;

#[derive(Parser)]
#[command(version, about = "Throughput-optimal schedules for energy harvesting nodes that share energy")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario file and print the result document as JSON
    Solve {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the capacity region of a two-way or MAC scenario as CSV
    Region {
        file: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the solvers against the brute-force oracle and structural properties
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Recheck a stored result document instead of random instances
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// Run a built-in scenario
    Demo { name: String },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_INPUT } else { cli::EXIT_OK });
        }
    };
    let outcome = match args.command {
        Command::Solve { file, out } => cli::run_solve(&file, out.as_deref()),
        Command::Region { file, svg, out } => cli::run_region(&file, svg.as_deref(), out.as_deref()),
        Command::Verify { result: Some(path), .. } => cli::run_recheck(&path),
        Command::Verify { seed, count, result: None } => cli::run_verify(seed, count),
        Command::Demo { name } => cli::run_demo(&name),
    };
    let _ = std::io::stdout().write_all(outcome.stdout.as_bytes());
    let _ = std::io::stderr().write_all(outcome.stderr.as_bytes());
    ExitCode::from(outcome.code)
}
