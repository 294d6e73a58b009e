//! `ginedge` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ginedge::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ASSERT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "ginedge", version, about = "Edge statistics of deformed complex Ginibre matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing. Overrides `out` in the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed. Overrides `seed` in the config.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Exit with status 3 when an acceptance threshold is missed.
    #[arg(long = "assert")]
    pub assert: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trace the support boundary and classify every vertex.
    Boundary(Common),
    /// Classify the configured edge point.
    Classify(Common),
    /// Monte Carlo edge density against the kernel diagonal.
    EdgeDensity(Common),
    /// Two-point statistics of the edge process.
    PairCorrelation(Common),
    /// Profile error across matrix sizes.
    Convergence(Common),
    /// Tabulate IE_n and K_n on a real grid.
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Kernel index n (real, at least -1).
        #[arg(long, allow_hyphen_values = true)]
        index: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Largest |x| accepted.
        #[arg(long)]
        window: Option<f64>,
    },
    /// Check the auxiliary matrix-integral identities.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Run one group only (tensor, cone, triangular, hciz, andreief).
        #[arg(long, value_name = "NAME")]
        only: Option<String>,
        /// Monte Carlo samples; reports without asserting.
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
    },
}

/// Exit status for an error: 2 for bad input, 4 for numerical trouble.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Json(_)
        | Error::Io { .. }
        | Error::InvalidMeasure(_)
        | Error::InvalidSpec(_)
        | Error::NotRegular(_)
        | Error::InsufficientR0(..)
        | Error::KernelDomain(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Boundary(c) => commands::boundary(&c),
        Command::Classify(c) => commands::classify(&c),
        Command::EdgeDensity(c) => commands::edge_density(&c),
        Command::PairCorrelation(c) => commands::pair_correlation(&c),
        Command::Convergence(c) => commands::convergence(&c),
        Command::Kernel {
            common,
            index,
            from,
            to,
            points,
            window,
        } => commands::kernel(&common, index, from, to, points, window),
        Command::Verify { common, only, samples } => commands::verify(&common, only.as_deref(), samples),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
