#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! `mixcurv`: inspect almost-product structures and verify their
//! curvature identities, criticality equations and first variations.
//!
//! Exit codes: 0 every verdict passes, 1 some verdict fails, 2 engine or
//! configuration error.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ElArgs, GalleryArgs, VariationArgs};
use config::{CliError, Common, Format};
use output::Report;

#[derive(Debug, Parser)]
#[command(name = "mixcurv", version, about = "Mixed scalar curvature of almost-product structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pointwise geometry (frame, extrinsic tensors, partial Ricci, scalars).
    Inspect(Common),
    /// Run a verification suite.
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
    /// List gallery entries with their expected values and criticality flags.
    Gallery(GalleryArgs),
}

#[derive(Debug, Subcommand)]
enum Suite {
    /// Curvature and divergence identities at each point.
    Identities(Common),
    /// Residuals of the criticality equations against their expectations.
    El(ElArgs),
    /// First-variation formulas, frame evolution and, with --grid, integral relations.
    Variations(VariationArgs),
    /// Expected values and flags of gallery entries.
    Gallery(Common),
}

fn run(cli: &Cli) -> Result<(Report, Format, Option<&std::path::PathBuf>), CliError> {
    Ok(match &cli.command {
        Command::Inspect(c) => (commands::inspect(c)?, c.format, c.out.as_ref()),
        Command::Verify { suite } => match suite {
            Suite::Identities(c) => (commands::identities(c)?, c.format, c.out.as_ref()),
            Suite::El(a) => (commands::el(a)?, a.common.format, a.common.out.as_ref()),
            Suite::Variations(a) => (commands::variations(a)?, a.common.format, a.common.out.as_ref()),
            Suite::Gallery(c) => (commands::verify_gallery(c)?, c.format, c.out.as_ref()),
        },
        Command::Gallery(a) => (commands::gallery(a)?, a.format, a.out.as_ref()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(report, format, out)| {
        output::emit(&report, format, out)?;
        Ok(report.pass)
    });
    match result {
        Ok(Some(false)) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
