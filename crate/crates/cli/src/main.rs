//! `map2risk` command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input or model, 3 numerical failure,
//! 4 a `reproduce-paper` check failed. Outputs of a failed run are removed.

mod aggregate;
mod diagnose;
mod fit;
mod inputs;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use map2risk::Execution;

use crate::output::OutputSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(
    name = "map2risk",
    version,
    about = "MAP2 frequency and dPlN severity models for annual operational losses"
)]
struct Cli {
    /// Master seed for every random stream
    #[arg(long, global = true, default_value_t = 20_240_601)]
    seed: u64,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format of tabular outputs; reports are always JSON
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Run on one thread (results are identical either way)
    #[arg(long, global = true)]
    sequential: bool,
    /// More log output (-v info, -vv debug); RUST_LOG overrides
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a MAP2 to inter-loss durations by maximum likelihood
    FitMap2(fit::FitMap2Args),
    /// Fit a double Pareto-lognormal severity to loss amounts
    FitSeverity(fit::FitSeverityArgs),
    /// Counting, persistence and overdispersion diagnostics of a model
    Diagnose(diagnose::DiagnoseArgs),
    /// Simulate annual aggregate losses and report VaR/ES
    Aggregate(aggregate::AggregateArgs),
    /// Run the MAP2 and Poisson frequency pipelines side by side
    ComparePoisson(aggregate::CompareArgs),
    /// Recompute the published figures and print a pass/fail table
    ReproducePaper(reproduce::ReproduceArgs),
}

/// Settings shared by every command.
pub struct Globals {
    pub seed: u64,
    pub exec: Execution,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let g = Globals {
        seed: cli.seed,
        exec: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    let mut out = match OutputSet::new(&cli.out, cli.format) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let result = match &cli.command {
        Command::FitMap2(a) => fit::fit_map2(&g, a, &mut out).map(|()| true),
        Command::FitSeverity(a) => fit::fit_severity(a, &mut out).map(|()| true),
        Command::Diagnose(a) => diagnose::run(&g, a, &mut out).map(|()| true),
        Command::Aggregate(a) => aggregate::aggregate(&g, a, &mut out).map(|()| true),
        Command::ComparePoisson(a) => aggregate::compare_poisson(&g, a, &mut out).map(|()| true),
        Command::ReproducePaper(a) => reproduce::run(&g, a, &mut out),
    };
    match result {
        Ok(all_passed) => {
            for p in out.commit() {
                log::info!("wrote {}", p.display());
            }
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ACCEPTANCE)
            }
        }
        Err(e) => {
            drop(out);
            fail(&e)
        }
    }
}

fn fail(e: &map2risk::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    })
}
