//! Scoring models that stand in for the episodic reward during search:
//! the gold-answer oracle, the LLM self-critic and the offline-trained
//! pairwise estimator.

mod dataset;
mod estimator;
mod gbt;
mod ridge;
mod threshold;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{collect_offline_dataset, read_dataset, write_dataset, CollectionSetup, OfflineSample};
pub use estimator::{
    estimator_predict, pearson, train_estimator, Regressor, RegressorConfig, ScorerModel, TrainingReport,
    MODEL_FORMAT_VERSION,
};
pub use gbt::{GbtConfig, GradientBoostedTrees, Tree, TreeNode};
pub use ridge::RidgeRegression;
pub use threshold::{precision_at, threshold_fit};

use crate::eval::metrics::{task_score, RewardMetric, TaskKind};
use crate::generator::{Generator, GeneratorError, SlotValues, TemplateName};
use crate::retrieval::{Embedder, RetrievalError};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("embedding dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model was trained with embedder `{expected}` but `{found}` is configured")]
    EmbedderMismatch { expected: String, found: String },
    #[error("threshold fitting needs at least one positive label")]
    NoPositiveLabels,
    #[error("dataset has {0} samples; at least 10 are required")]
    DatasetTooSmall(usize),
    #[error("{0}")]
    InvalidInput(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ScoringError {
    pub fn is_transport(&self) -> bool {
        match self {
            Self::Generator(e) => e.is_transport(),
            Self::Retrieval(e) => e.is_transport(),
            _ => false,
        }
    }
}

/// What a scorer sees when a new thought is simulated.
#[derive(Debug, Clone, Copy)]
pub struct ScoreInput<'a> {
    pub query: &'a str,
    pub thought: &'a str,
    /// Texts of the two nodes combined into `thought`.
    pub parents: [&'a str; 2],
}

pub trait Scorer: Send + Sync {
    /// Score in [0, 1]. Language-model calls go through `generator` so the
    /// caller can count them.
    fn score(&self, input: &ScoreInput<'_>, generator: &dyn Generator) -> Result<f64, ScoringError>;
}

/// Reward estimate for a candidate pair before any thought is generated.
pub trait PairEstimator: Send + Sync {
    fn estimate(&self, first: &str, second: &str) -> Result<f64, ScoringError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Oracle,
    SelfCritic,
    Estimation,
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _: &ScoreInput<'_>, _: &dyn Generator) -> Result<f64, ScoringError> {
        Ok(self.0)
    }
}

/// Task metric of the answer extracted from the thought. Needs gold answers,
/// so it is only usable on labelled data.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    pub task: TaskKind,
    pub metric: RewardMetric,
    pub gold_answers: Vec<String>,
}

impl OracleScorer {
    pub fn new(task: TaskKind, gold_answers: Vec<String>) -> Self {
        Self {
            task,
            metric: RewardMetric::Binary,
            gold_answers,
        }
    }
}

pub fn oracle_score(
    thought: &str,
    query: &str,
    gold_answers: &[String],
    task: TaskKind,
    metric: RewardMetric,
    answerer: &dyn Generator,
) -> Result<f64, ScoringError> {
    let completion = answerer.answer(query, Some(thought))?;
    Ok(task_score(task, metric, &completion, gold_answers))
}

impl Scorer for OracleScorer {
    fn score(&self, input: &ScoreInput<'_>, generator: &dyn Generator) -> Result<f64, ScoringError> {
        oracle_score(input.thought, input.query, &self.gold_answers, self.task, self.metric, generator)
    }
}

/// `p1 / (p1 + p0)` from log-probabilities, evaluated as a logistic of the
/// difference so large magnitudes do not overflow.
pub fn self_critic_probability(logprob_one: f64, logprob_zero: f64) -> f64 {
    if logprob_one == logprob_zero {
        return 0.5;
    }
    let d = logprob_zero - logprob_one;
    if d.is_nan() {
        return 0.5;
    }
    1.0 / (1.0 + d.exp())
}

/// Asks the model whether the thought suffices to answer the query and reads
/// the relative probability of `"1"` over `"0"`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelfCriticScorer;

pub fn self_critic_score(thought: &str, query: &str, generator: &dyn Generator) -> Result<f64, ScoringError> {
    let prompt = generator.templates().render(
        TemplateName::SelfCritic,
        &SlotValues {
            query: Some(query),
            thought: Some(thought),
            ..Default::default()
        },
    ).map_err(GeneratorError::from)?;
    match generator.score_tokens(&prompt, &["1", "0"]) {
        Ok(lp) => Ok(self_critic_probability(lp["1"], lp["0"])),
        Err(GeneratorError::Capability(why)) => {
            log::warn!("self-critic without log-probabilities ({why}); parsing completion instead");
            let completion = generator.complete(&prompt)?;
            Ok(match completion.trim_start().chars().next() {
                Some('1') => 1.0,
                Some('0') => 0.0,
                _ => 0.5,
            })
        }
        Err(e) => Err(e.into()),
    }
}

impl Scorer for SelfCriticScorer {
    fn score(&self, input: &ScoreInput<'_>, generator: &dyn Generator) -> Result<f64, ScoringError> {
        self_critic_score(input.thought, input.query, generator)
    }
}

/// Scores a thought by the trained estimator applied to its parent pair.
#[derive(Clone)]
pub struct EstimatorScorer {
    model: Arc<ScorerModel>,
    embedder: Arc<dyn Embedder>,
}

impl EstimatorScorer {
    pub fn new(model: Arc<ScorerModel>, embedder: Arc<dyn Embedder>) -> Result<Self, ScoringError> {
        if model.embedder_id != embedder.id() {
            return Err(ScoringError::EmbedderMismatch {
                expected: model.embedder_id.clone(),
                found: embedder.id().to_string(),
            });
        }
        Ok(Self { model, embedder })
    }

    pub fn model(&self) -> &ScorerModel {
        &self.model
    }
}

impl PairEstimator for EstimatorScorer {
    fn estimate(&self, first: &str, second: &str) -> Result<f64, ScoringError> {
        let a = self.embedder.embed(first)?;
        let b = self.embedder.embed(second)?;
        estimator_predict(&self.model, &a, &b)
    }
}

impl Scorer for EstimatorScorer {
    fn score(&self, input: &ScoreInput<'_>, _: &dyn Generator) -> Result<f64, ScoringError> {
        self.estimate(input.parents[0], input.parents[1])
    }
}

impl<F> PairEstimator for F
where
    F: Fn(&str, &str) -> f64 + Send + Sync,
{
    fn estimate(&self, first: &str, second: &str) -> Result<f64, ScoringError> {
        Ok(self(first, second))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::SimulatedGenerator;

    #[test]
    fn self_critic_examples() {
        assert_eq!(self_critic_probability(-0.7, -0.7), 0.5);
        let s = self_critic_probability(0.6f64.ln(), 0.2f64.ln());
        assert!((s - 0.75).abs() < 1e-12);
        assert_eq!(self_critic_probability(-0.1, f64::NEG_INFINITY), 1.0);
        assert_eq!(self_critic_probability(f64::NEG_INFINITY, -0.1), 0.0);
        assert_eq!(self_critic_probability(f64::NEG_INFINITY, f64::NEG_INFINITY), 0.5);
    }

    #[test]
    fn self_critic_on_simulated_backend() {
        let g = SimulatedGenerator::default();
        let covered = self_critic_score("fact:a=1 fact:b=2", "ask:a+b", &g).unwrap();
        assert!((covered - 0.95).abs() < 1e-12);
        let partial = self_critic_score("fact:a=1", "ask:a+b", &g).unwrap();
        assert!(partial < 0.49);
        let degraded = SimulatedGenerator::default().without_logprobs();
        assert_eq!(self_critic_score("fact:a=1 fact:b=2", "ask:a+b", &degraded).unwrap(), 1.0);
        assert_eq!(self_critic_score("fact:a=1", "ask:a+b", &degraded).unwrap(), 0.0);
    }

    #[test]
    fn oracle_examples() {
        let g = SimulatedGenerator::default();
        let gold = vec!["1 2".to_string()];
        let both = oracle_score("fact:a=1 fact:b=2", "ask:a+b", &gold, TaskKind::SimulatedFact, RewardMetric::Binary, &g);
        assert_eq!(both.unwrap(), 1.0);
        let one = oracle_score("fact:a=1", "ask:a+b", &gold, TaskKind::SimulatedFact, RewardMetric::Binary, &g);
        assert_eq!(one.unwrap(), 0.0);
        let empty = oracle_score("", "ask:a+b", &gold, TaskKind::SimulatedFact, RewardMetric::Binary, &g);
        assert_eq!(empty.unwrap(), 0.0);
    }

    #[test]
    fn constant_scorer() {
        let g = SimulatedGenerator::default();
        let input = ScoreInput {
            query: "q",
            thought: "t",
            parents: ["a", "b"],
        };
        assert_eq!(ConstantScorer(0.5).score(&input, &g).unwrap(), 0.5);
    }
}
