//! `doemarket` command-line harness.

mod compare;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use doemarket::coordinator::Mode;
use doemarket::netmodel::Case;

#[derive(Parser)]
#[command(
    name = "doemarket",
    version,
    about = "Peer-to-peer market clearing with operating envelopes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear a case and write the run artifacts.
    Run(run::RunArgs),
    /// Side-by-side metrics of two run directories.
    Compare(compare::CompareArgs),
    /// Load a case and print a summary.
    Validate {
        #[arg(long)]
        case: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Admm,
    Coca,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Admm => Mode::Admm,
            ModeArg::Coca => Mode::Coca,
        }
    }
}

fn main() -> ExitCode {
    // usage errors share exit 1 with every other failure; 2 means non-convergence
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Compare(args) => compare::cmd_compare(&args).map(|_| ExitCode::SUCCESS),
        Command::Validate { case } => cmd_validate(&case).map(|_| ExitCode::SUCCESS),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}

fn cmd_validate(path: &PathBuf) -> anyhow::Result<()> {
    let case = Case::load(path)?;
    let pairs = case.num_directed_pairs() / 2;
    println!("case        {}", path.display());
    println!("nodes       {}", case.network.nodes.len());
    println!("lines       {}", case.network.lines.len());
    println!("periods     {}", case.horizon());
    println!("prosumers   {}", case.prosumers.len());
    println!("trade pairs {pairs}");
    let nodes: Vec<String> = case.prosumers.iter().map(|p| p.node.to_string()).collect();
    println!("hosts       {}", nodes.join(" "));
    Ok(())
}
