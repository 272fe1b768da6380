//! `thoughtctl`: ingest corpora, train the scorer, answer queries, run
//! benchmarks and render thought-process traces.

mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thought_planner::config::ConfigError;
use thought_planner::eval::EvalError;
use thought_planner::generator::GeneratorError;
use thought_planner::mdp::MdpError;
use thought_planner::planner::{SearchError, SearchFailure};
use thought_planner::retrieval::RetrievalError;
use thought_planner::scoring::{ScorerKind, ScoringError};
use thought_planner::trace::TraceError;
use thought_planner::transport::TransportError;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "thoughtctl", version, about = "Retrieval-grounded thought-graph planning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Engine config file (TOML).
    #[arg(long, global = true, env = "THOUGHTCTL_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub max_steps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub scorer: Option<ScorerArg>,
    /// Generator endpoint URL.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Corpus index file.
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Trained estimator model file.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Oracle,
    SelfCritic,
    Estimation,
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::Oracle => ScorerKind::Oracle,
            ScorerArg::SelfCritic => ScorerKind::SelfCritic,
            ScorerArg::Estimation => ScorerKind::Estimation,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Mcts,
    Greedy,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TraceFormat {
    Structured,
    Graphviz,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Chunk and embed a corpus into an index file.
    Ingest {
        /// A directory of text files or a newline-delimited JSON record file.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use each file's top-level directory name as its filter key.
        #[arg(long)]
        filter_from_dir: bool,
    },
    /// Write the seeded planted-fact world: corpus, train and test splits.
    Simulate {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Answer one query and write its trace.
    Run {
        #[arg(long)]
        query: String,
        /// Gold answer(s), required by the oracle scorer.
        #[arg(long)]
        gold: Vec<String>,
        /// Restrict retrieval to documents with this filter key.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_enum, default_value = "mcts")]
        policy: Policy,
        #[arg(long, default_value = "trace.json")]
        trace: PathBuf,
    },
    /// Collect oracle searches on a training split and fit the estimator.
    TrainScorer {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the collected dataset (newline-delimited JSON).
        #[arg(long)]
        dataset_out: Option<PathBuf>,
        /// Fail when the holdout MSE exceeds this bound.
        #[arg(long)]
        max_holdout_mse: Option<f64>,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Benchmark methods on a dataset and write one report per method.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated method names, or `all`.
        #[arg(long, default_value = "all")]
        methods: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Thought budgets for accuracy-vs-size curves, e.g. `2,5,10`.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
        /// Also write one trace per example and method.
        #[arg(long)]
        traces: bool,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Render a trace as structured JSON or Graphviz source.
    ExportTrace {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "structured")]
        format: TraceFormat,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Args, Debug, Clone)]
pub struct LoadArgs {
    /// Keep only examples whose gold answer has the form "X mg".
    #[arg(long)]
    pub mg_only: bool,
    /// Reassign splits positionally as TRAIN,TEST counts.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub split_counts: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
}

/// A configuration problem detected by the CLI itself.
#[derive(Debug)]
pub struct ConfigIssue(pub String);

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigIssue {}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let transport = cause.downcast_ref::<TransportError>().is_some()
            || cause.downcast_ref::<GeneratorError>().is_some_and(GeneratorError::is_transport)
            || cause.downcast_ref::<RetrievalError>().is_some_and(RetrievalError::is_transport)
            || cause.downcast_ref::<ScoringError>().is_some_and(ScoringError::is_transport)
            || cause.downcast_ref::<SearchFailure>().is_some_and(SearchFailure::is_transport)
            || cause.downcast_ref::<SearchError>().is_some_and(|e| e.failure.is_transport());
        if transport {
            return EXIT_TRANSPORT;
        }
        let config = cause.downcast_ref::<ConfigError>().is_some()
            || cause.downcast_ref::<ConfigIssue>().is_some()
            || matches!(
                cause.downcast_ref::<EvalError>(),
                Some(EvalError::MissingPort { .. } | EvalError::InvalidConfig(_))
            )
            || matches!(
                cause.downcast_ref::<ScoringError>(),
                Some(ScoringError::EmbedderMismatch { .. } | ScoringError::DimensionMismatch { .. })
            )
            || matches!(
                cause.downcast_ref::<RetrievalError>(),
                Some(RetrievalError::EmbedderMismatch { .. })
            )
            || matches!(cause.downcast_ref::<MdpError>(), Some(MdpError::InvalidConfig(_)))
            || matches!(
                cause.downcast_ref::<SearchError>().map(|e| &e.failure),
                Some(SearchFailure::Mdp(MdpError::InvalidConfig(_)))
            )
            || matches!(cause.downcast_ref::<TraceError>(), Some(TraceError::Version(_)));
        if config {
            return EXIT_CONFIG;
        }
    }
    EXIT_FAILURE
}

/// The error chain joined by ": ", skipping causes already spelled out by
/// the message that wraps them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code_for(&e))
        }
    }
}
