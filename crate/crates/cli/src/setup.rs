//! Turns the layered configuration into live ports.

use std::sync::Arc;

use anyhow::{Context, Result};
use thought_planner::config::{Backend, EmbedderConfig, EngineConfig, TaskMode};
use thought_planner::generator::{Generator, RemoteGenerator, SimulatedGenerator, TemplateSet};
use thought_planner::planner::CorpusPort;
use thought_planner::retrieval::{CorpusIndex, Embedder, RemoteEmbedder};
use thought_planner::scoring::{EstimatorScorer, ScorerModel};

use crate::{ConfigIssue, GlobalArgs};

/// File (or mode defaults), then environment, then flags.
pub fn load_config(global: &GlobalArgs) -> Result<EngineConfig> {
    let mut cfg = match &global.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::defaults(TaskMode::Simulated),
    };
    cfg.apply_env(|k| std::env::var(k).ok());
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(w) = global.workers {
        cfg.workers = w;
    }
    if let Some(t) = global.max_steps {
        cfg.search.max_steps = t;
    }
    if let Some(s) = global.scorer {
        cfg.scorer = s.into();
    }
    if let Some(url) = &global.endpoint {
        cfg.generator.endpoint.url = url.clone();
    }
    if let Some(p) = &global.index {
        cfg.retrieval.index_path = Some(p.clone());
    }
    if let Some(p) = &global.model {
        cfg.estimator.model_path = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn templates(cfg: &EngineConfig) -> Result<TemplateSet> {
    Ok(match (&cfg.generator.template_file, cfg.task_mode) {
        (Some(path), _) => TemplateSet::load(path)?,
        (None, TaskMode::Emrqa) => TemplateSet::emrqa(),
        (None, TaskMode::Boolq | TaskMode::Simulated) => TemplateSet::boolq(),
    })
}

pub fn generator(cfg: &EngineConfig) -> Result<Box<dyn Generator>> {
    let templates = templates(cfg)?;
    Ok(match cfg.generator.backend {
        Backend::Simulated => Box::new(SimulatedGenerator::new(templates)),
        Backend::Remote => Box::new(RemoteGenerator::new(
            cfg.generator.endpoint.clone(),
            templates,
            cfg.generator.max_tokens,
            cfg.generator.temperature,
        )?),
    })
}

/// The configured remote embedder; `None` for the hashed embedder, whose
/// weights live in the index.
pub fn external_embedder(cfg: &EngineConfig) -> Result<Option<Arc<dyn Embedder>>> {
    Ok(match &cfg.retrieval.embedder {
        EmbedderConfig::Hashed { .. } => None,
        EmbedderConfig::Remote { endpoint, id, dim } => {
            Some(Arc::new(RemoteEmbedder::new(endpoint.clone(), id.clone(), *dim)?))
        }
    })
}

pub struct Corpus {
    pub index: CorpusIndex,
    pub embedder: Arc<dyn Embedder>,
}

impl Corpus {
    pub fn port(&self, cfg: &EngineConfig) -> CorpusPort<'_> {
        CorpusPort {
            index: &self.index,
            embedder: self.embedder.as_ref(),
            query_mode: cfg.retrieval.query_mode,
        }
    }
}

pub fn corpus(cfg: &EngineConfig) -> Result<Option<Corpus>> {
    let Some(path) = &cfg.retrieval.index_path else {
        return Ok(None);
    };
    let index = CorpusIndex::load(path).with_context(|| format!("loading index {}", path.display()))?;
    let embedder = index.embedder(external_embedder(cfg)?)?;
    Ok(Some(Corpus { index, embedder }))
}

/// The embedder used for estimator features: the index's when one is
/// configured, otherwise the remote one.
pub fn feature_embedder(cfg: &EngineConfig, corpus: Option<&Corpus>) -> Result<Arc<dyn Embedder>> {
    if let Some(c) = corpus {
        return Ok(c.embedder.clone());
    }
    external_embedder(cfg)?.ok_or_else(|| {
        ConfigIssue("the hashed embedder needs a corpus index (--index or retrieval.index_path)".into()).into()
    })
}

pub fn estimator(cfg: &EngineConfig, corpus: Option<&Corpus>) -> Result<Option<EstimatorScorer>> {
    let Some(path) = &cfg.estimator.model_path else {
        return Ok(None);
    };
    let embedder = feature_embedder(cfg, corpus)?;
    let model = ScorerModel::load(path, Some(embedder.id()))
        .with_context(|| format!("loading scorer model {}", path.display()))?;
    Ok(Some(EstimatorScorer::new(Arc::new(model), embedder)?))
}
