//! Per-method benchmark execution and report assembly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::QAExample;
use super::metrics::{task_score, RewardMetric};
use super::EvalError;
use crate::generator::{CountingGenerator, Generator};
pub use crate::planner::CorpusPort;
use crate::mdp::EpisodeConfig;
use crate::planner::{
    greedy_search, random_search, run_search, GreedyPorts, SearchError, SearchOutcome, SearchPorts, Termination,
};
use crate::retrieval::fnv1a;
use crate::scoring::{EstimatorScorer, OracleScorer, Scorer, SelfCriticScorer};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LlmOnly,
    Rag,
    MctsOracle,
    #[serde(rename = "mcts_oracle_no_ir")]
    MctsOracleNoIR,
    MctsSelfCritic,
    MctsEstimation,
    GreedyEstimation,
    /// Uniform random pairing; a control, not one of the compared methods.
    RandomPairing,
}

impl Method {
    /// The compared methods (the control excluded).
    pub const ALL: [Method; 7] = [
        Method::LlmOnly,
        Method::Rag,
        Method::MctsOracle,
        Method::MctsOracleNoIR,
        Method::MctsSelfCritic,
        Method::MctsEstimation,
        Method::GreedyEstimation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LlmOnly => "llm_only",
            Method::Rag => "rag",
            Method::MctsOracle => "mcts_oracle",
            Method::MctsOracleNoIR => "mcts_oracle_no_ir",
            Method::MctsSelfCritic => "mcts_self_critic",
            Method::MctsEstimation => "mcts_estimation",
            Method::GreedyEstimation => "greedy_estimation",
            Method::RandomPairing => "random_pairing",
        }
    }

    pub fn needs_gold(self) -> bool {
        matches!(self, Method::MctsOracle | Method::MctsOracleNoIR | Method::RandomPairing)
    }

    pub fn needs_estimator(self) -> bool {
        matches!(self, Method::MctsEstimation | Method::GreedyEstimation)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .chain([Method::RandomPairing])
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Score above which each scorer stops the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopThresholds {
    pub oracle: f64,
    pub self_critic: f64,
    /// `None` uses the threshold fitted with the estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<f64>,
}

impl Default for StopThresholds {
    fn default() -> Self {
        Self {
            oracle: 0.5,
            self_critic: 0.49,
            estimation: Some(0.21),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub episode: EpisodeConfig,
    pub stop: StopThresholds,
    pub reward_metric: RewardMetric,
    pub workers: usize,
    pub seed: u64,
    pub config_hash: Option<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            stop: StopThresholds::default(),
            reward_metric: RewardMetric::Binary,
            workers: 1,
            seed: 0,
            config_hash: None,
        }
    }
}

#[derive(Clone, Copy)]
pub struct BenchmarkPorts<'a> {
    pub generator: &'a dyn Generator,
    pub corpus: Option<CorpusPort<'a>>,
    pub estimator: Option<&'a EstimatorScorer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub query_id: String,
    pub correct: bool,
    /// Task metric under the configured reward metric.
    pub score: f64,
    pub answer: String,
    pub thought_count: usize,
    /// Every generator call made for this example, the final answer included.
    pub generator_calls: u64,
    /// Generator calls made inside the search only.
    pub search_generator_calls: u64,
    pub scorer_calls: u64,
    pub retrieval_calls: u64,
    pub terminated_by: Option<Termination>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub max_thoughts: usize,
    pub examples: usize,
    pub accuracy: f64,
    pub mean_generator_calls: f64,
    /// Search generator calls divided by generated thoughts, pooled.
    pub calls_per_thought: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub method: Method,
    pub max_steps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub example_count: usize,
    pub error_count: usize,
    /// Mean of per-example correctness.
    pub aggregate: f64,
    pub mean_score: f64,
    pub mean_generator_calls: f64,
    pub mean_thought_count: f64,
    /// Accuracy and calls grouped by the thought count each example reached.
    pub by_thought_count: Vec<CurveRow>,
    pub per_example: Vec<ExampleRow>,
}

impl BenchmarkReport {
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            method: Method,
            max_steps: usize,
            seed: u64,
            config_hash: Option<&'a str>,
            example_count: usize,
            error_count: usize,
            aggregate: f64,
            mean_score: f64,
            mean_generator_calls: f64,
            mean_thought_count: f64,
            by_thought_count: &'a [CurveRow],
        }
        let s = Summary {
            method: self.method,
            max_steps: self.max_steps,
            seed: self.seed,
            config_hash: self.config_hash.as_deref(),
            example_count: self.example_count,
            error_count: self.error_count,
            aggregate: self.aggregate,
            mean_score: self.mean_score,
            mean_generator_calls: self.mean_generator_calls,
            mean_thought_count: self.mean_thought_count,
            by_thought_count: &self.by_thought_count,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"
    }

    /// Mean correctness recomputed from the rows.
    pub fn recomputed_aggregate(&self) -> f64 {
        mean(self.per_example.iter().map(|r| f64::from(u8::from(r.correct))))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn curve_row(max_thoughts: usize, rows: &[&ExampleRow]) -> CurveRow {
    let thoughts: usize = rows.iter().map(|r| r.thought_count).sum();
    let search_calls: u64 = rows.iter().map(|r| r.search_generator_calls).sum();
    CurveRow {
        max_thoughts,
        examples: rows.len(),
        accuracy: mean(rows.iter().map(|r| f64::from(u8::from(r.correct)))),
        mean_generator_calls: mean(rows.iter().map(|r| r.generator_calls as f64)),
        calls_per_thought: if thoughts == 0 {
            0.0
        } else {
            search_calls as f64 / thoughts as f64
        },
    }
}

/// One row per report, keyed by the report's thought budget.
pub fn accuracy_vs_size_curve(reports: &[BenchmarkReport]) -> Vec<CurveRow> {
    let mut rows: Vec<CurveRow> = reports
        .iter()
        .map(|r| curve_row(r.max_steps, &r.per_example.iter().collect::<Vec<_>>()))
        .collect();
    rows.sort_by_key(|r| r.max_thoughts);
    rows
}

/// Per-example seed, stable under reordering or subsetting of the dataset.
pub fn example_seed(base: u64, query_id: &str) -> u64 {
    // splitmix64 finalizer over the mixed inputs
    let mut z = base ^ fnv1a(query_id.as_bytes());
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_ports(method: Method, ports: &BenchmarkPorts<'_>) -> Result<(), EvalError> {
    if method.needs_estimator() && ports.estimator.is_none() {
        return Err(EvalError::MissingPort {
            method: method.as_str(),
            port: "a trained estimator model",
        });
    }
    if method == Method::Rag && ports.corpus.is_none() {
        return Err(EvalError::MissingPort {
            method: method.as_str(),
            port: "a corpus index",
        });
    }
    Ok(())
}

fn search(
    ex: &QAExample,
    method: Method,
    ports: &BenchmarkPorts<'_>,
    config: &BenchmarkConfig,
    generator: &dyn Generator,
    seed: u64,
) -> Result<SearchOutcome, SearchError> {
    let retriever = ports.corpus.map(|c| c.retriever(ex.filter_key.as_deref()));
    let oracle = OracleScorer {
        task: ex.task,
        metric: config.reward_metric,
        gold_answers: ex.gold_answers.clone(),
    };
    let estimator = ports.estimator;
    let estimation_stop = || {
        config
            .stop
            .estimation
            .unwrap_or_else(|| estimator.map_or(0.5, |e| e.model().threshold))
    };
    let (scorer, stop): (&dyn Scorer, f64) = match method {
        Method::MctsOracle | Method::MctsOracleNoIR | Method::RandomPairing => (&oracle, config.stop.oracle),
        Method::MctsSelfCritic => (&SelfCriticScorer, config.stop.self_critic),
        Method::MctsEstimation | Method::GreedyEstimation => {
            (estimator.expect("checked by check_ports"), estimation_stop())
        }
        Method::LlmOnly | Method::Rag => unreachable!("baselines do not search"),
    };
    let episode = EpisodeConfig {
        stop_threshold: stop,
        ..config.episode
    };
    let search_ports = SearchPorts {
        generator,
        retriever: if method == Method::MctsOracleNoIR { None } else { retriever },
        scorer,
    };
    match method {
        Method::GreedyEstimation => greedy_search(
            &ex.query,
            GreedyPorts {
                generator,
                retriever,
                estimator: estimator.expect("checked by check_ports"),
            },
            &episode,
        ),
        Method::RandomPairing => random_search(&ex.query, search_ports, &episode, seed),
        _ => run_search(&ex.query, search_ports, &episode, seed),
    }
}

fn run_example(
    ex: &QAExample,
    method: Method,
    ports: &BenchmarkPorts<'_>,
    config: &BenchmarkConfig,
) -> (ExampleRow, Option<Trace>) {
    let seed = example_seed(config.seed, &ex.query_id);
    let generator = CountingGenerator::new(ports.generator);
    let mut row = ExampleRow {
        query_id: ex.query_id.clone(),
        correct: false,
        score: 0.0,
        answer: String::new(),
        thought_count: 0,
        generator_calls: 0,
        search_generator_calls: 0,
        scorer_calls: 0,
        retrieval_calls: 0,
        terminated_by: None,
        error: None,
    };
    let mut trace = None;
    let completion: Result<String, String> = match method {
        Method::LlmOnly => generator.answer(&ex.query, None).map_err(|e| e.to_string()),
        Method::Rag => {
            let corpus = ports.corpus.expect("checked by check_ports");
            row.retrieval_calls = 1;
            corpus
                .index
                .retrieve(corpus.embedder, &ex.query, 1, ex.filter_key.as_deref(), &Default::default())
                .map_err(|e| e.to_string())
                .and_then(|docs| {
                    let context = docs.first().map(|d| d.text.as_str());
                    generator.answer(&ex.query, context).map_err(|e| e.to_string())
                })
        }
        _ => match search(ex, method, ports, config, &generator, seed) {
            Ok(outcome) => {
                row.thought_count = outcome.graph.generated_count();
                row.search_generator_calls = outcome.generator_calls;
                row.scorer_calls = outcome.scorer_calls;
                row.retrieval_calls = outcome.retrieval_calls;
                row.terminated_by = Some(outcome.terminated_by);
                let best = &outcome.graph.nodes()[outcome.best_thought.0].text;
                let answer = generator.answer(&ex.query, Some(best)).map_err(|e| e.to_string());
                trace = Some(Trace::from_outcome(&outcome, answer.as_ref().ok().cloned()));
                answer
            }
            Err(e) => {
                if let Some(g) = &e.partial {
                    row.thought_count = g.generated_count();
                    let mut t = Trace::from_graph(g);
                    t.error = Some(e.to_string());
                    trace = Some(t);
                }
                row.search_generator_calls = generator.calls();
                Err(e.to_string())
            }
        },
    };
    row.generator_calls = generator.calls();
    match completion {
        Ok(c) => {
            row.correct = task_score(ex.task, RewardMetric::Binary, &c, &ex.gold_answers) >= 1.0;
            row.score = task_score(ex.task, config.reward_metric, &c, &ex.gold_answers);
            row.answer = c;
        }
        Err(e) => {
            log::warn!("{method} failed on {}: {e}", ex.query_id);
            row.error = Some(e);
        }
    }
    (row, trace)
}

/// Runs `method` on every example; failures become incorrect rows.
pub fn run_benchmark_with_traces(
    examples: &[QAExample],
    method: Method,
    ports: BenchmarkPorts<'_>,
    config: &BenchmarkConfig,
) -> Result<(BenchmarkReport, Vec<(String, Trace)>), EvalError> {
    check_ports(method, &ports)?;
    if method.needs_gold() && examples.iter().any(|e| e.gold_answers.is_empty()) {
        return Err(EvalError::InvalidConfig(format!("{method} needs gold answers for every example")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    let results: Vec<(ExampleRow, Option<Trace>)> =
        pool.install(|| examples.par_iter().map(|ex| run_example(ex, method, &ports, config)).collect());

    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for (row, trace) in results {
        if let Some(t) = trace {
            traces.push((row.query_id.clone(), t));
        }
        rows.push(row);
    }
    let mut counts: Vec<usize> = rows.iter().map(|r| r.thought_count).collect();
    counts.sort_unstable();
    counts.dedup();
    let by_thought_count = counts
        .into_iter()
        .map(|k| curve_row(k, &rows.iter().filter(|r| r.thought_count == k).collect::<Vec<_>>()))
        .collect();
    let report = BenchmarkReport {
        method,
        max_steps: config.episode.max_steps,
        seed: config.seed,
        config_hash: config.config_hash.clone(),
        example_count: rows.len(),
        error_count: rows.iter().filter(|r| r.error.is_some()).count(),
        aggregate: mean(rows.iter().map(|r| f64::from(u8::from(r.correct)))),
        mean_score: mean(rows.iter().map(|r| r.score)),
        mean_generator_calls: mean(rows.iter().map(|r| r.generator_calls as f64)),
        mean_thought_count: mean(rows.iter().map(|r| r.thought_count as f64)),
        by_thought_count,
        per_example: rows,
    };
    Ok((report, traces))
}

pub fn run_benchmark(
    examples: &[QAExample],
    method: Method,
    ports: BenchmarkPorts<'_>,
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport, EvalError> {
    run_benchmark_with_traces(examples, method, ports, config).map(|(r, _)| r)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::io(path, e))?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

pub fn write_rows_csv(path: &Path, report: &BenchmarkReport) -> Result<(), EvalError> {
    write_csv(path, &report.per_example)
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<(), EvalError> {
    write_csv(path, rows)
}
