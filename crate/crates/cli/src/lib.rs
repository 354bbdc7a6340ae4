//! The `wlk` command line.
//!
//! Subcommands form a pipeline: `synth` writes a corpus, `bounds` renders
//! per-level supervision, `train` fits a checkpoint, `infer` writes merged
//! heatmaps, `eval` scores them and `curves` redraws the plots. `ablate`
//! repeats train, infer and eval over a grid of bound settings.
//!
//! Exit status: 0 success, 2 usage, 3 data, 4 numeric failure.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "wlk", version, about = "Point-supervised anomaly localization with the Window Loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config of flat dotted keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set bounds.tau=1.25`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Shorthand for `--set synth.seed=N`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write lower/upper bound grids for every level of every image.
    Bounds {
        /// Corpus directory holding manifest.json.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Restrict to one split; all records by default.
        #[arg(long)]
        split: Option<String>,
    },
    /// Train a model and keep the epoch with the best validation AUROC.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Shorthand for `--set train.epochs=N`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Shorthand for `--set train.divergence=D`.
        #[arg(long)]
        divergence: Option<String>,
    },
    /// Write the merged heatmap of every image in the evaluated split.
    Infer {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score heatmaps: ROC, FROC and a summary.
    Eval {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Directory of `<stem>.wlk` heatmaps written by `infer`.
        #[arg(long, value_name = "DIR")]
        predictions: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Shorthand for `--set eval.svg=true`.
        #[arg(long)]
        svg: bool,
    },
    /// Draw roc.svg and froc.svg from an `eval` directory.
    Curves {
        /// Directory written by `eval`.
        #[arg(long = "eval", value_name = "DIR")]
        eval_dir: PathBuf,
        /// Defaults to the eval directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one model per grid cell and seed.
    Ablate {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// JSON list of cells `{"tau", "r_lower", "r_upper", "divergence"}`;
        /// the standard grid when omitted.
        #[arg(long, value_name = "FILE")]
        grid: Option<PathBuf>,
        /// Divergences of the standard grid.
        #[arg(long, value_delimiter = ',', default_value = "mse,kld")]
        divergences: Vec<String>,
        /// Seeds per cell; metrics are averaged over them.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Cells run concurrently as separate processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// One ablation run; used by `ablate --jobs`.
    #[command(hide = true)]
    AblateRun {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Parsed invocation: the subcommand plus its config layers.
#[derive(Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: ConfigArgs,
}

fn command_with_help() -> clap::Command {
    let keys = config::help_text();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |sub| ConfigArgs::augment_args(sub).after_help(keys.clone()));
    }
    cmd
}

/// Parses arguments; `Err` carries clap's formatted message (help and
/// version requests included).
pub fn parse<I, T>(args: I) -> Result<Invocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command_with_help().try_get_matches_from(args)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let (_, sub) = matches.subcommand().expect("subcommand required");
    let config = ConfigArgs::from_arg_matches(sub)?;
    Ok(Invocation {
        command: cli.command,
        config,
    })
}

/// Runs a parsed invocation.
pub fn execute(inv: Invocation) -> CliResult<()> {
    commands::dispatch(inv)
}

/// Entry point: parse, run, report, and map the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match parse(args) {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

pub(crate) fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{what} directory {} does not exist", path.display())))
    }
}
