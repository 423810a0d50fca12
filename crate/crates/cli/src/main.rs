//! `seqfuse` command-line driver: generate, train, dedup, eval.

mod commands;
mod settings;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{CommonArgs, RunConfig};

/// Exit status for bad input or configuration.
const EXIT_VALIDATION: u8 = 2;
/// Exit status for failures while running.
const EXIT_RUNTIME: u8 = 1;

/// Bad input or configuration.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "seqfuse", version, about = "Sequential score-level fusion for identity de-duplication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize subjects and per-identifier score files.
    Generate(CommonArgs),
    /// Train fusion models, one per cross-validation fold.
    Train(CommonArgs),
    /// De-duplicate every test probe and report fusion effort.
    Dedup(CommonArgs),
    /// Emit CMC, DET and PEET tables plus a summary.
    Eval(CommonArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (args, action): (&CommonArgs, fn(&RunConfig) -> anyhow::Result<()>) = match &cli.command {
        Command::Generate(a) => (a, commands::generate),
        Command::Train(a) => (a, commands::train),
        Command::Dedup(a) => (a, commands::dedup),
        Command::Eval(a) => (a, commands::eval),
    };
    let cfg = RunConfig::resolve(args)?;
    if let Some(n) = cfg.workers()? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    action(&cfg)
}

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Usage>() || c.downcast_ref::<seqfuse::Error>().is_some_and(seqfuse::Error::is_validation)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
