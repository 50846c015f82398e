use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use enerkin::cli::{self, error_json, RunOptions};
use enerkin::par::init_thread_cap;
use enerkin::scenario::load_scenario;
use enerkin::{Error, Execution, Result};

#[derive(Parser)]
#[command(
    name = "enerkin",
    version,
    about = "Stochastic chemical kinetics with energy parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle simulator and write snapshot CSVs.
    Simulate(Common),
    /// Integrate the kinetic equations and write grid CSVs.
    Solve(Common),
    /// Write entropy and goodness-of-fit CSVs.
    Analyze(Common),
    /// Run the scenario's checks; exit 0 iff all pass.
    Check(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("ENERKIN_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::invalid("ENERKIN_THREADS", format!("expected a positive integer, got {s:?}"))),
    }
}

fn run(command: Command) -> Result<bool> {
    init_thread_cap(thread_cap()?);
    let (Command::Simulate(args) | Command::Solve(args) | Command::Analyze(args) | Command::Check(args)) = &command;
    let scenario = load_scenario(&args.scenario)?;
    let opts = RunOptions {
        seed: args.seed,
        replicas: args.replicas,
        execution: Execution::Parallel,
    };
    let out = &args.out;
    match &command {
        Command::Simulate(_) => cli::simulate(&scenario, out, opts).map(|_| true),
        Command::Solve(_) => cli::solve(&scenario, out, opts).map(|_| true),
        Command::Analyze(_) => cli::analyze(&scenario, out, opts).map(|_| true),
        Command::Check(_) => {
            let report = cli::check(&scenario, out, opts)?;
            for c in &report.checks {
                println!(
                    "{} {}: observed {:e} tolerance {:e} ({} samples)",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.observed,
                    c.tolerance,
                    c.samples
                );
            }
            Ok(report.all_pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(2)
        }
    }
}
