//! `zgs`: model selection over a pre-trained model zoo by graph learning.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data or
//! integrity error, 3 numerical failure.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{Overrides, RunConfig};
use zgs::{Error, Real};

const THREADS_VAR: &str = "ZGS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "zgs", version, about = "Rank pre-trained models for a target dataset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Zoo registry directory.
    #[arg(long)]
    zoo: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every stage.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory (default: the zoo directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset embeddings and the pairwise similarity matrix.
    Similarity(Common),
    /// LogME scores from probe features under <zoo>/logme.
    Logme(Common),
    /// Build the zoo graph and dump its edges.
    Graph(Common),
    /// Learn node embeddings with the configured embedder.
    Embed(Common),
    /// Fit the full pipeline and save the predictor.
    Train(Common),
    /// Rank models for a dataset with a trained predictor.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Leave-one-out evaluation over every dataset.
    Evaluate(Common),
    /// Leave-one-out evaluation on subsampled training history.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Single target dataset (default: all).
        #[arg(long)]
        target: Option<String>,
        /// Training-history ratios, comma separated.
        #[arg(long, value_delimiter = ',')]
        ratio: Vec<Real>,
    },
    /// Generate a synthetic zoo.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>, Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("{THREADS_VAR} must be a non-negative integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map(Some)
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

fn load(c: &Common, ratios: Vec<Real>) -> Result<RunConfig, Failure> {
    let o = Overrides {
        zoo: c.zoo.clone(),
        out: c.out.clone(),
        seed: c.seed,
        ratios,
    };
    Ok(RunConfig::load(c.config.as_deref(), &o)?)
}

fn run(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Similarity(c) => commands::similarity(&load(&c, vec![])?, out)?,
        Command::Logme(c) => commands::logme(&load(&c, vec![])?, out)?,
        Command::Graph(c) => commands::graph(&load(&c, vec![])?, out)?,
        Command::Embed(c) => commands::embed(&load(&c, vec![])?, out)?,
        Command::Train(c) => commands::train(&load(&c, vec![])?, out)?,
        Command::Predict { common, target, top_k } => commands::predict_target(&load(&common, vec![])?, &target, top_k, out)?,
        Command::Evaluate(c) => commands::evaluate(&load(&c, vec![])?, out)?,
        Command::Ablate { common, target, ratio } => commands::ablate(&load(&common, ratio)?, target.as_deref(), out)?,
        Command::Synth { config, seed, out: dir } => {
            let o = Overrides {
                seed,
                ..Overrides::default()
            };
            commands::synth(&RunConfig::load(config.as_deref(), &o)?, &dir, out)?
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = thread_pool().and_then(|pool| {
        let mut stdout = std::io::stdout();
        match pool {
            Some(p) => p.install(|| run(cli.command, &mut stdout)),
            None => run(cli.command, &mut stdout),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
