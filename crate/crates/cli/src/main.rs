//! `autoer`: profile datasets, run, grid-search and tune the entity
//! resolution pipeline, recommend configurations, and summarize trial logs.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// An error in the invocation or its inputs (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "autoer", version, about = "Entity resolution with automatic configuration")]
struct Cli {
    /// Worker threads for internal parallelism.
    #[arg(long, env = "AUTOER_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML study manifest.
    #[arg(long, short)]
    pub manifest: Option<PathBuf>,
    /// First collection of an ad-hoc dataset.
    #[arg(long, requires = "e2")]
    pub e1: Option<PathBuf>,
    /// Second collection of an ad-hoc dataset.
    #[arg(long, requires = "e1")]
    pub e2: Option<PathBuf>,
    /// Ground truth of the ad-hoc dataset.
    #[arg(long, requires = "e1")]
    pub gt: Option<PathBuf>,
    /// Name of the ad-hoc dataset.
    #[arg(long, default_value = "dataset")]
    pub name: String,
    #[arg(long, default_value = "id")]
    pub id_column: String,
    /// Synthetic dataset as NAME:SIZE[:SEED]; repeatable.
    #[arg(long)]
    pub synthetic: Vec<String>,
    /// Vector file for an embedder as NAME=PATH; repeatable.
    #[arg(long)]
    pub embedding: Vec<String>,
    /// Comma-separated embedders of the search space.
    #[arg(long, value_delimiter = ',')]
    pub embedders: Vec<String>,
    /// Parent directory of the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run directory name instead of a time stamp.
    #[arg(long)]
    pub run_name: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the twelve dataset features.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Also report F10 as the count of absent attribute slots.
        #[arg(long)]
        alt_f10: bool,
    },
    /// Run the pipeline with one configuration.
    Run {
        #[command(flatten)]
        common: Common,
        /// Configuration as EMBEDDER,K,CLUSTERING,THRESHOLD.
        #[arg(long, conflicts_with = "default_config")]
        config: Option<String>,
        /// Use (st5, 10, UMC, 0.5).
        #[arg(long)]
        default_config: bool,
        #[arg(long)]
        embedder: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        clustering: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
        /// Ignore ground truth and report clusters only.
        #[arg(long)]
        no_gt: bool,
    },
    /// Evaluate every point of the search space.
    Grid {
        #[command(flatten)]
        common: Common,
    },
    /// Run sampler studies.
    Tune {
        #[command(flatten)]
        common: Common,
        /// random, qmc, tpe, gp or grid.
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        /// Number of seeds, 0..N. Ignored by grid.
        #[arg(long)]
        seeds: Option<u64>,
        /// Fraction of ground-truth pairs used for scoring.
        #[arg(long)]
        subsample: Option<f64>,
        /// Continue the logs of an earlier run directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Recommend configurations with the regression model.
    Recommend {
        #[command(flatten)]
        common: Common,
        /// Instance generation: grid, sampling or all.
        #[arg(long)]
        mode: Option<String>,
        /// Dataset to recommend for; without it every dataset is held out in turn.
        #[arg(long)]
        target: Option<String>,
        /// Model file, loaded when present, written otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Instance CSV, loaded when present, written otherwise.
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Recommender seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trials of the forest hyper-parameter search.
        #[arg(long)]
        forest_trials: Option<usize>,
        /// Trials per sampler run when generating sampling instances.
        #[arg(long)]
        budget: Option<usize>,
        /// Seeds 0..N when generating sampling instances.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Convergence and runtime curves from a directory of trial logs.
    Report {
        /// Directory of trial logs.
        logs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        run_name: Option<String>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<autoer::Error>() {
            return match e {
                autoer::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
                autoer::Error::Io { .. } | autoer::Error::DivisionByZero(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Profile { common, alt_f10 } => commands::profile(&common, alt_f10),
        Command::Run {
            common,
            config,
            default_config,
            embedder,
            k,
            clustering,
            threshold,
            no_gt,
        } => commands::run(
            &common,
            commands::ConfigArgs {
                config,
                default_config,
                embedder,
                k,
                clustering,
                threshold,
            },
            no_gt,
        ),
        Command::Grid { common } => commands::grid(&common),
        Command::Tune {
            common,
            sampler,
            budget,
            seeds,
            subsample,
            resume,
        } => commands::tune(&common, sampler, budget, seeds, subsample, resume),
        Command::Recommend {
            common,
            mode,
            target,
            model,
            instances,
            seed,
            forest_trials,
            budget,
            seeds,
        } => commands::recommend(
            &common,
            commands::RecommendArgs {
                mode,
                target,
                model,
                instances,
                seed,
                forest_trials,
                budget,
                seeds,
            },
        ),
        Command::Report { logs, out, run_name } => commands::report(&logs, out, run_name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
