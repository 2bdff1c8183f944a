//! `pdon`: data generation, surrogate training and evaluation, and
//! two-stage parameter estimation from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pdon::datagen::{CaseId, Role};
use pdon::models::Architecture;

#[derive(Debug, Parser)]
#[command(name = "pdon", version, about = "Parametric DeepONet surrogates and parameter estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every stage.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `$PDON_OUT/<stage>` or `pdon-out/<stage>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a Duffing dataset for one case and role.
    GenData {
        #[arg(long, value_parser = parse_case)]
        case: CaseId,
        #[arg(long, value_parser = parse_role)]
        role: Role,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train a forward surrogate; writes a checkpoint and history.csv.
    TrainForward {
        #[arg(long)]
        train: Option<PathBuf>,
        /// Optional held-out set evaluated during training.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, value_parser = parse_arch)]
        arch: Option<Architecture>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a surrogate on a dataset; writes eval_summary.csv and eval_samples.csv.
    EvalForward {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Gradient-based initialization with random restarts; writes init.csv.
    InvertInit {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the refinement network on initialized training samples.
    TrainRefine {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// init.csv from invert-init; computed on the fly when absent.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Initialize and refine parameter estimates; writes estimates.csv.
    Estimate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        refine: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a resolution-invariant surrogate on refined time grids.
    Superres {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        factors: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// PCA map of parameter-net features over a uniform parameter grid.
    LatentPca {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        grid_n: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_case(s: &str) -> Result<CaseId, String> {
    s.parse().map_err(|e: pdon::Error| e.to_string())
}

fn parse_role(s: &str) -> Result<Role, String> {
    s.parse().map_err(|e: pdon::Error| e.to_string())
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: pdon::Error| e.to_string())
}

/// 0 on success, 1 for usage and input errors, 2 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<pdon::Error>())
        .any(pdon::Error::is_numerical);
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
