//! `ralm`: simulate measurements, build likelihood tensors, train and
//! evaluate the regressor, and run the classical baselines.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3
//! numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ralm::error::ErrorClass;
use ralm::estimators::Method;

#[derive(Parser, Debug)]
#[command(name = "ralm", version, about = "Range/angle likelihood maps and CNN localization")]
pub struct Cli {
    /// Overrides the seed stored in the scenario or training config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample tag positions and measurements from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a measurement dataset into stacked likelihood tensors.
    Gridmaps {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the regressor; the checkpoint is rewritten on every
    /// validation improvement.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// TOML with optional [train] and [model] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        report: PathBuf,
    },
    /// Seeded random search over the hyperparameter space.
    Search {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 12)]
        trials: usize,
        /// Per-trial epoch budget; replaces `epochs` from [train].
        #[arg(long, default_value_t = 15)]
        epochs: usize,
        /// TOML with optional [train], [model] and [space] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a tensor dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::All)]
        split: Split,
        #[arg(long)]
        out_metrics: PathBuf,
        #[arg(long)]
        out_ecdf: PathBuf,
    },
    /// Classical grid estimates from measurements.
    Locate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Argmax)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histograms of measured minus true range and angle.
    Residuals {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    /// Every sample in the file.
    All,
    /// The validation side of the split recorded in the checkpoint.
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Argmax,
    Centroid,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Argmax => Method::Argmax,
            MethodArg::Centroid => Method::Centroid,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Data => ExitCode::from(2),
                ErrorClass::Numerical => ExitCode::from(3),
            }
        }
    }
}
