//! `climattr`: fit monthly count–temperature models, attribute events to
//! warming, project attributed costs, and check the machinery on synthetic data.

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

use commands::attribute::AttributeArgs;
use commands::fit::FitArgs;
use commands::project::ProjectArgs;
use commands::report::ReportArgs;
use commands::simulate::SimulateArgs;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "climattr",
    version,
    about = "Attribute weather-event counts and costs to warming"
)]
#[command(after_help = "Exit codes: 0 success, 1 oracle failure, 2 usage or input error, 3 degenerate fit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the twelve monthly count–temperature models and diagnostics
    Fit(FitArgs),
    /// Attribute each observed month under the three schemes
    Attribute(AttributeArgs),
    /// Project the attributed annual cost now and at a horizon
    Project(ProjectArgs),
    /// Generate a synthetic series and run the oracle checks
    Simulate(SimulateArgs),
    /// Summarize every stage output found in the output directory
    Report(ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ClapErrorKind::DisplayHelp
            | ClapErrorKind::DisplayVersion
            | ClapErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => e.exit(),
            _ => return CliError::usage(e.to_string().trim_end()).report(),
        },
    };
    let result = match cli.command {
        Command::Fit(args) => commands::fit::run(args),
        Command::Attribute(args) => commands::attribute::run(args),
        Command::Project(args) => commands::project::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
