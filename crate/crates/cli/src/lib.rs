//! The `ltssl` command line: synthetic cohorts, fold files, pretraining,
//! pretext evaluation, fine-tuning grids and the consolidated report.

mod commands;
mod config;
mod error;
mod io;
mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ltssl_core::training::InitKind;

pub use config::{RunConfig, Snapshot, SNAPSHOT};
pub use error::{exit_code, EXIT_FAILED, EXIT_INVALID, EXIT_OK};

use commands::Global;

#[derive(Parser, Debug)]
#[command(name = "ltssl", version, about = "Longitudinal self-supervised learning on synthetic retinal scans")]
struct Cli {
    /// TOML file with [synth], [folds], [pretrain] and [finetune] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the section the command uses.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for the command's outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for fold rotations and grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort into --out.
    Synth,
    /// Assign patients to cross-validation folds.
    Folds {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Pretrain the siamese interval regressor on every fold rotation.
    Pretrain(PretrainArgs),
    /// Pretrain the autoencoder baseline on every fold rotation.
    PretrainAe(PretrainArgs),
    /// Grid-search fine-tuning for conversion prediction.
    Finetune(FinetuneArgs),
    /// Score a siamese pretraining run on its held-out folds.
    Eval {
        /// Directory written by `ltssl pretrain`.
        #[arg(long)]
        run: PathBuf,
        /// Cohort to evaluate on; defaults to the one the run was trained on.
        #[arg(long)]
        cohort: Option<PathBuf>,
    },
    /// Rebuild the tables and figures from eval and finetune runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Fold file; defaults to folds.toml inside the cohort.
    #[arg(long)]
    folds: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// scratch, ae or ssl.
    #[arg(long)]
    init: InitKind,
    /// Conversion horizon in months (6, 12 or 18).
    #[arg(long)]
    horizon: Option<f64>,
    /// Pretraining run providing the initial encoders (ae and ssl).
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    folds: Option<PathBuf>,
    /// Accept horizons other than 6, 12 and 18 months.
    #[arg(long)]
    allow_any_horizon: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if cli.jobs == 0 {
        return Err(error::usage("--jobs must be at least 1"));
    }
    let global = Global {
        config: RunConfig::load(cli.config.as_deref())?,
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
        force: cli.force,
    };
    match cli.command {
        Command::Synth => commands::synth::run(&global),
        Command::Folds { cohort, k } => commands::folds::run(&global, &cohort, k),
        Command::Pretrain(a) => commands::pretrain::run(&global, &a.cohort, a.folds.as_deref(), commands::pretrain::Kind::Siamese),
        Command::PretrainAe(a) => {
            commands::pretrain::run(&global, &a.cohort, a.folds.as_deref(), commands::pretrain::Kind::Autoencoder)
        }
        Command::Finetune(a) => commands::finetune::run(
            &global,
            &commands::finetune::Request {
                cohort: a.cohort,
                init: a.init,
                horizon: a.horizon,
                pretrained: a.pretrained,
                folds: a.folds,
                allow_any_horizon: a.allow_any_horizon,
            },
        ),
        Command::Eval { run, cohort } => commands::eval::run(&global, &run, cohort.as_deref()),
        Command::Report { runs } => commands::report::run(&global, &runs),
    }
}
