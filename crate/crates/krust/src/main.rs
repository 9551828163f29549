use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use krust::{Failure, RunConfig, Sched, DEFAULT_SEARCH_STEPS, EXIT_OK, EXIT_USAGE};
use krust_core::machine::DEFAULT_MAX_STEPS;

/// Ownership checker, lowering and abstract machine for a small Rust-like language.
#[derive(Parser)]
#[command(name = "krust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Type- and borrow-check a surface program (.krs), or parse a core one (.kcl).
    Check { input: PathBuf },
    /// Translate a surface program to core.
    Lower {
        input: PathBuf,
        /// Write the core program here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute a program to termination.
    Run {
        input: PathBuf,
        /// round-robin, random, or trace:FILE (lines of `tid step rule`).
        #[arg(long, default_value = "round-robin")]
        sched: Sched,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
        /// Print the final memory after the result.
        #[arg(long)]
        dump_memory: bool,
        /// Print one `tid step rule` line per step to stderr.
        #[arg(long)]
        trace: bool,
        /// Stop at the first data race (exit 3).
        #[arg(long)]
        strict_races: bool,
        /// Fail on reads of units never written.
        #[arg(long)]
        strict_uninit: bool,
    },
    /// Explore every thread interleaving.
    Search {
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEARCH_STEPS)]
        max_steps: u64,
    },
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let res = match cli.command {
        Command::Check { input } => krust::check(&input, &mut out),
        Command::Lower { input, output } => krust::lower(&input, output.as_deref(), &mut out),
        Command::Run {
            input,
            sched,
            seed,
            max_steps,
            dump_memory,
            trace,
            strict_races,
            strict_uninit,
        } => {
            let cfg = RunConfig { sched, seed, max_steps, dump_memory, trace, strict_races, strict_uninit };
            krust::run_file(&input, &cfg, &mut out, &mut io::stderr().lock())
        }
        Command::Search { input, max_steps } => krust::search(&input, max_steps, &mut out),
    };
    out.flush()?;
    res
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
