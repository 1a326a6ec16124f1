//! Batch command-line surface. Exit codes: 0 success, 1 pipeline error,
//! 2 usage or configuration error.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConsistencyK, RunConfig};
use crate::error::{Error, Result};

pub use manifest::{RepoEntry, Repos};

#[derive(Debug, Parser)]
#[command(name = "issueloc", version, about = "Retrieve-and-rerank issue localization toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides seeds.root.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the function inventory of a checkout.
    Extract(ExtractArgs),
    /// Build instances, filtered triples and dataset statistics from PRs.
    Curate(CurateArgs),
    /// Embed every unit of each manifest repository into a flat index.
    Index(IndexArgs),
    /// Retrieve, optionally rerank, and score when golds are present.
    Localize(LocalizeArgs),
    /// Score ranked lists against a benchmark.
    Eval(EvalArgs),
    /// Tables and CSV breakdowns over one or more eval outputs.
    Report(ReportArgs),
    /// Train the toy encoder on triples or on the planted corpus.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub repo: PathBuf,
    #[arg(long)]
    pub commit: String,
    /// Defaults to the checkout's directory name.
    #[arg(long)]
    pub repo_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// File extensions to scan; repeatable.
    #[arg(long = "ext", default_values_t = [crate::units::DEFAULT_EXTENSION.to_string()])]
    pub extensions: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Pull-request records, JSON Lines.
    #[arg(long)]
    pub prs: PathBuf,
    /// Repos manifest, JSON Lines.
    #[arg(long)]
    pub repos: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Consistency cutoff, or "none" to disable filtering.
    #[arg(long)]
    pub k: Option<ConsistencyK>,
    /// Hard negatives per triple.
    #[arg(long)]
    pub m: Option<usize>,
    /// Apply language-share and near-duplicate repository selection first.
    #[arg(long)]
    pub select_repos: bool,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub repos: PathBuf,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Queries, JSON Lines; `gold_functions` is optional.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub repos: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub rerank: bool,
    /// identity, reverse, oracle or remote.
    #[arg(long)]
    pub provider: Option<String>,
    /// Comma-separated cutoffs used at every granularity.
    #[arg(long)]
    pub ks: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long)]
    pub ranked: PathBuf,
    #[arg(long)]
    pub repos: PathBuf,
    /// Usage ledger written by localize.
    #[arg(long)]
    pub usage: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ks: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `name=path/to/eval.json`; repeatable.
    #[arg(long = "run", required = true)]
    pub runs: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Triples written by curate.
    #[arg(long, conflicts_with = "planted")]
    pub triples: Option<PathBuf>,
    /// Train on the built-in planted corpus and report Acc@1.
    #[arg(long)]
    pub planted: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub features: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
}

pub(crate) fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} is not a readable file", path.display())))
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::SnapshotAccess { .. } => 2,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds.root = s;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Curate(a) => {
            if let Some(k) = a.k {
                cfg.pipeline.k = k;
            }
            if let Some(m) = a.m {
                cfg.pipeline.m = m;
            }
            cfg.validate()?;
            commands::curate(&cfg, a)
        }
        Command::Index(a) => commands::index(&cfg, a),
        Command::Localize(a) => {
            if let Some(k) = a.top_k {
                cfg.pipeline.top_k = k;
            }
            if let Some(p) = &a.provider {
                cfg.completion.provider = p.clone();
            }
            cfg.validate()?;
            commands::localize(&cfg, a)
        }
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Report(a) => commands::report(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
