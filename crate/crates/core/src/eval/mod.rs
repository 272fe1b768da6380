//! QA datasets, answer metrics and the benchmark runner.

mod benchmark;
mod dataset;
pub mod metrics;

use thiserror::Error;

pub use benchmark::{
    accuracy_vs_size_curve, example_seed, run_benchmark, run_benchmark_with_traces, write_curve_csv, write_rows_csv,
    BenchmarkConfig, BenchmarkPorts, BenchmarkReport, CorpusPort, CurveRow, ExampleRow, Method, StopThresholds,
};
pub use dataset::{is_mg_answer, load_examples, write_examples, LoadOptions, QAExample, Split};
pub use metrics::{RewardMetric, TaskKind};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("method `{method}` needs {port}")]
    MissingPort { method: &'static str, port: &'static str },
    #[error("{0}")]
    InvalidConfig(String),
}

impl EvalError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
