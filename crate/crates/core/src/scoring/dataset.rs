//! Offline training data: oracle-scored searches flattened into
//! `(parent embedding, parent embedding, reward)` samples.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{OracleScorer, ScoringError};
use crate::eval::{example_seed, QAExample, RewardMetric};
use crate::generator::Generator;
use crate::mdp::{EpisodeConfig, ThoughtGraph};
use crate::planner::{run_search, CorpusPort, SearchPorts};
use crate::retrieval::Embedder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineSample {
    pub query_id: String,
    pub emb_i: Vec<f64>,
    pub emb_j: Vec<f64>,
    pub reward: f64,
}

#[derive(Clone, Copy)]
pub struct CollectionSetup<'a> {
    pub generator: &'a dyn Generator,
    pub corpus: Option<CorpusPort<'a>>,
    pub embedder: &'a dyn Embedder,
    /// Search settings; `stop_threshold` is the oracle's.
    pub episode: EpisodeConfig,
    pub metric: RewardMetric,
    pub workers: usize,
    pub seed: u64,
}

fn graph_samples(query_id: &str, graph: &ThoughtGraph, embedder: &dyn Embedder) -> Result<Vec<OfflineSample>, ScoringError> {
    let mut out = Vec::new();
    for id in graph.generated_ids() {
        let node = &graph.nodes()[id.0];
        let text = |i: usize| graph.nodes()[node.parents[i].0].text.as_str();
        out.push(OfflineSample {
            query_id: query_id.to_string(),
            emb_i: embedder.embed(text(0))?,
            emb_j: embedder.embed(text(1))?,
            reward: graph.all_stats()[id.0].sim_score.unwrap_or(0.0),
        });
    }
    Ok(out)
}

/// Runs an oracle-scored search per example and emits one sample per
/// generated thought. Failed examples are skipped with a warning; the output
/// order follows the input order.
pub fn collect_offline_dataset(examples: &[QAExample], setup: &CollectionSetup<'_>) -> Result<Vec<OfflineSample>, ScoringError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(setup.workers.max(1))
        .build()
        .map_err(|e| ScoringError::InvalidInput(e.to_string()))?;
    let per_example: Vec<Vec<OfflineSample>> = pool.install(|| {
        examples
            .par_iter()
            .map(|ex| {
                let scorer = OracleScorer {
                    task: ex.task,
                    metric: setup.metric,
                    gold_answers: ex.gold_answers.clone(),
                };
                let ports = SearchPorts {
                    generator: setup.generator,
                    retriever: setup.corpus.map(|c| c.retriever(ex.filter_key.as_deref())),
                    scorer: &scorer,
                };
                let seed = example_seed(setup.seed, &ex.query_id);
                let samples = run_search(&ex.query, ports, &setup.episode, seed)
                    .map_err(|e| e.to_string())
                    .and_then(|o| graph_samples(&ex.query_id, &o.graph, setup.embedder).map_err(|e| e.to_string()));
                samples.unwrap_or_else(|e| {
                    log::warn!("skipping {} during dataset collection: {e}", ex.query_id);
                    Vec::new()
                })
            })
            .collect()
    });
    Ok(per_example.into_iter().flatten().collect())
}

pub fn write_dataset(path: &Path, samples: &[OfflineSample]) -> Result<(), ScoringError> {
    let io = |e: String| ScoringError::Io {
        path: path.display().to_string(),
        message: e,
    };
    let mut buf = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut buf, s).map_err(|e| io(e.to_string()))?;
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| io(e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<Vec<OfflineSample>, ScoringError> {
    let text = fs::read_to_string(path).map_err(|e| ScoringError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| ScoringError::Io {
                path: format!("{}:{}", path.display(), i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}
