//! Engine configuration: one TOML file layered over per-mode defaults, then
//! environment overrides for endpoints and secrets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{RewardMetric, StopThresholds, TaskKind};
use crate::mdp::EpisodeConfig;
use crate::planner::QueryMode;
use crate::retrieval::DEFAULT_DIM;
use crate::scoring::{RegressorConfig, ScorerKind};
use crate::sim::SimWorldConfig;
use crate::transport::EndpointConfig;

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written
/// as decimal strings. Both forms are accepted on input.
pub(crate) mod seed_serde {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => v.serialize(s),
            Err(_) => seed.to_string().serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t.trim().parse().map_err(|_| de::Error::custom(format!("invalid seed `{t}`"))),
        }
    }
}

pub const ENV_ENDPOINT: &str = "THOUGHTCTL_ENDPOINT";
pub const ENV_API_KEY: &str = "THOUGHTCTL_API_KEY";
pub const ENV_EMBEDDER_URL: &str = "THOUGHTCTL_EMBEDDER_URL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    Boolq,
    Emrqa,
    Simulated,
}

impl TaskMode {
    pub fn task_kind(self) -> TaskKind {
        match self {
            TaskMode::Boolq => TaskKind::Boolean,
            TaskMode::Emrqa => TaskKind::ExtractiveMg,
            TaskMode::Simulated => TaskKind::SimulatedFact,
        }
    }
}

/// Search hyperparameters; the stop threshold comes from `[stop]` according
/// to the selected scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    pub max_steps: usize,
    pub gamma: f64,
    pub exploration_c: f64,
    pub p_doc: f64,
    pub doc_batch_size: usize,
    pub thought_sample_size: usize,
}

/// Score thresholds for judging scorer accuracy against oracle labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyThresholds {
    pub self_critic: f64,
    pub estimation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashed { dim: usize },
    Remote { endpoint: EndpointConfig, id: String, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSettings {
    pub chunk_words: usize,
    pub embedder: EmbedderConfig,
    pub query_mode: QueryMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Simulated,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSettings {
    pub backend: Backend,
    pub endpoint: EndpointConfig,
    /// Overrides the bundled templates of the task mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_file: Option<PathBuf>,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub regressor: RegressorConfig,
    pub holdout_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub task_mode: TaskMode,
    pub scorer: ScorerKind,
    pub reward_metric: RewardMetric,
    #[serde(with = "seed_serde")]
    pub seed: u64,
    pub workers: usize,
    pub search: SearchSettings,
    pub stop: StopThresholds,
    pub accuracy: AccuracyThresholds,
    pub retrieval: RetrievalSettings,
    pub generator: GeneratorSettings,
    pub estimator: EstimatorSettings,
    pub sim: SimWorldConfig,
}

impl EngineConfig {
    /// Defaults for a task mode.
    pub fn defaults(mode: TaskMode) -> Self {
        let (p_doc, doc_batch_size, chunk_words, estimation, query_mode) = match mode {
            TaskMode::Boolq => (0.5, 2, 500, Some(0.21), QueryMode::Formulated),
            TaskMode::Emrqa => (1.0, 10, 100, Some(0.22), QueryMode::Raw),
            // no fixed value carries over to the planted-fact world; use the fitted one
            TaskMode::Simulated => (0.5, 2, 500, None, QueryMode::Raw),
        };
        Self {
            task_mode: mode,
            scorer: ScorerKind::Oracle,
            reward_metric: RewardMetric::Binary,
            seed: 0,
            workers: 4,
            search: SearchSettings {
                max_steps: 10,
                gamma: 1.0,
                exploration_c: std::f64::consts::SQRT_2,
                p_doc,
                doc_batch_size,
                thought_sample_size: 5,
            },
            stop: StopThresholds {
                oracle: 0.5,
                self_critic: 0.49,
                estimation,
            },
            accuracy: AccuracyThresholds {
                self_critic: 0.9,
                estimation: 0.21,
            },
            retrieval: RetrievalSettings {
                chunk_words,
                embedder: EmbedderConfig::Hashed { dim: DEFAULT_DIM },
                query_mode,
                index_path: None,
            },
            generator: GeneratorSettings {
                backend: if mode == TaskMode::Simulated {
                    Backend::Simulated
                } else {
                    Backend::Remote
                },
                endpoint: EndpointConfig::default(),
                template_file: None,
                max_tokens: 256,
                temperature: None,
            },
            estimator: EstimatorSettings {
                model_path: None,
                regressor: RegressorConfig::default(),
                holdout_fraction: 0.2,
            },
            sim: SimWorldConfig::default(),
        }
    }

    /// Parses TOML text, filling every omitted field from the defaults of
    /// the file's `task_mode` (simulated when absent).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mode = match file.get("task_mode") {
            Some(v) => v
                .clone()
                .try_into::<TaskMode>()
                .map_err(|e| ConfigError::Parse(format!("task_mode: {e}")))?,
            None => TaskMode::Simulated,
        };
        let defaults = toml::Table::try_from(Self::defaults(mode)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let merged = merge(defaults, file);
        let config: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization, secrets excluded.
    pub fn hash(&self) -> String {
        let mut redacted = self.clone();
        redacted.generator.endpoint.api_key = None;
        if let EmbedderConfig::Remote { endpoint, .. } = &mut redacted.retrieval.embedder {
            endpoint.api_key = None;
        }
        let digest = Sha256::digest(redacted.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Applies endpoint and secret overrides from `lookup` (normally the
    /// process environment).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(url) = lookup(ENV_ENDPOINT) {
            self.generator.endpoint.url = url;
        }
        if let Some(key) = lookup(ENV_API_KEY) {
            self.generator.endpoint.api_key = Some(key.clone());
            if let EmbedderConfig::Remote { endpoint, .. } = &mut self.retrieval.embedder {
                endpoint.api_key = Some(key);
            }
        }
        if let Some(url) = lookup(ENV_EMBEDDER_URL) {
            if let EmbedderConfig::Remote { endpoint, .. } = &mut self.retrieval.embedder {
                endpoint.url = url;
            }
        }
    }

    pub fn stop_threshold(&self, scorer: ScorerKind, fitted: Option<f64>) -> f64 {
        match scorer {
            ScorerKind::Oracle => self.stop.oracle,
            ScorerKind::SelfCritic => self.stop.self_critic,
            ScorerKind::Estimation => self.stop.estimation.or(fitted).unwrap_or(0.5),
        }
    }

    pub fn episode(&self, stop_threshold: f64) -> EpisodeConfig {
        let s = &self.search;
        EpisodeConfig {
            max_steps: s.max_steps,
            gamma: s.gamma,
            stop_threshold,
            exploration_c: s.exploration_c,
            p_doc: s.p_doc,
            doc_batch_size: s.doc_batch_size,
            thought_sample_size: s.thought_sample_size,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        self.episode(self.stop.oracle)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.workers < 1 {
            return invalid("workers must be >= 1");
        }
        if self.retrieval.chunk_words < 1 {
            return invalid("retrieval.chunk_words must be >= 1");
        }
        let dim = match &self.retrieval.embedder {
            EmbedderConfig::Hashed { dim } | EmbedderConfig::Remote { dim, .. } => *dim,
        };
        if dim < 1 {
            return invalid("retrieval.embedder.dim must be >= 1");
        }
        if !(0.0..1.0).contains(&self.estimator.holdout_fraction) {
            return invalid("estimator.holdout_fraction must lie in [0, 1)");
        }
        for (name, t) in [
            ("stop.oracle", Some(self.stop.oracle)),
            ("stop.self_critic", Some(self.stop.self_critic)),
            ("stop.estimation", self.stop.estimation),
            ("accuracy.self_critic", Some(self.accuracy.self_critic)),
            ("accuracy.estimation", Some(self.accuracy.estimation)),
        ] {
            if t.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
                return Err(ConfigError::Invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.generator.backend == Backend::Remote && self.generator.endpoint.url.trim().is_empty() {
            return invalid("generator.endpoint.url is required for the remote backend");
        }
        if self.scorer == ScorerKind::Estimation && self.estimator.model_path.is_none() {
            return invalid("the estimation scorer needs estimator.model_path");
        }
        Ok(())
    }
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(mut base: toml::Table, top: toml::Table) -> toml::Table {
    for (k, v) in top {
        let merged = match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) if !is_tagged(&t) => toml::Value::Table(merge(b, t)),
            (_, v) => v,
        };
        base.insert(k, merged);
    }
    base
}

/// Tagged enums (`kind = ...`) replace wholesale so variant fields never mix.
fn is_tagged(t: &toml::Table) -> bool {
    t.contains_key("kind")
}
