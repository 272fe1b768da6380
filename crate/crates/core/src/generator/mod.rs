//! The language-model port: thought generation, answering, retrieval-query
//! formulation and next-token scoring.
//!
//! Two implementations ship: [`RemoteGenerator`] renders prompt templates
//! and talks to a completion endpoint, and [`SimulatedGenerator`] interprets
//! machine-readable `fact:KEY=VALUE` tokens so every planner claim can be
//! checked offline.

mod remote;
mod simulated;
mod templates;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use remote::{CompletionRequest, CompletionResponse, RemoteGenerator};
pub use simulated::{parse_ask, parse_facts, FactSet, SimulatedGenerator, UNKNOWN_ANSWER};
pub use templates::{
    PromptTemplate, Slot, SlotValues, TemplateError, TemplateName, TemplateSet, BOOLQ_TEMPLATES, EMRQA_TEMPLATES,
};

use crate::mdp::ThoughtKind;
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("backend lacks capability: {0}")]
    Capability(String),
    #[error("invalid generator input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl GeneratorError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport(e) if e.is_retryable())
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Transport(_))
    }
}

/// One side of the pair handed to thought generation.
#[derive(Debug, Clone, Copy)]
pub struct ParentInput<'a> {
    pub text: &'a str,
    pub kind: ThoughtKind,
}

pub trait Generator: Send + Sync {
    /// Combines two parents into a new thought. Document parents fill the
    /// `{documents}` slot; query and generated parents fill `{thoughts}`.
    fn generate_thought(&self, parents: [ParentInput<'_>; 2], query: &str) -> Result<String, GeneratorError>;

    /// Raw answer completion, with context or closed-book.
    fn answer(&self, query: &str, context: Option<&str>) -> Result<String, GeneratorError>;

    fn formulate_retrieval_query(&self, best_thoughts: &str, query: &str) -> Result<String, GeneratorError>;

    /// Next-token log-probabilities for exactly `tokens`.
    fn score_tokens(&self, prompt: &str, tokens: &[&str]) -> Result<BTreeMap<String, f64>, GeneratorError>;

    fn complete(&self, prompt: &str) -> Result<String, GeneratorError>;

    fn templates(&self) -> &TemplateSet;
}

/// Splits the parents of a thought-generation call into the `{thoughts}` and
/// `{documents}` slot contents.
pub fn route_parents(parents: &[ParentInput<'_>; 2]) -> (String, String) {
    let join = |want_doc: bool| {
        parents
            .iter()
            .filter(|p| (p.kind == ThoughtKind::Document) == want_doc)
            .map(|p| p.text)
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    (join(false), join(true))
}

/// Counts every call that reaches the wrapped generator.
pub struct CountingGenerator<'a> {
    inner: &'a dyn Generator,
    calls: AtomicU64,
}

impl<'a> CountingGenerator<'a> {
    pub fn new(inner: &'a dyn Generator) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }
}

impl Generator for CountingGenerator<'_> {
    fn generate_thought(&self, parents: [ParentInput<'_>; 2], query: &str) -> Result<String, GeneratorError> {
        self.tick();
        self.inner.generate_thought(parents, query)
    }

    fn answer(&self, query: &str, context: Option<&str>) -> Result<String, GeneratorError> {
        self.tick();
        self.inner.answer(query, context)
    }

    fn formulate_retrieval_query(&self, best_thoughts: &str, query: &str) -> Result<String, GeneratorError> {
        self.tick();
        self.inner.formulate_retrieval_query(best_thoughts, query)
    }

    fn score_tokens(&self, prompt: &str, tokens: &[&str]) -> Result<BTreeMap<String, f64>, GeneratorError> {
        self.tick();
        self.inner.score_tokens(prompt, tokens)
    }

    fn complete(&self, prompt: &str) -> Result<String, GeneratorError> {
        self.tick();
        self.inner.complete(prompt)
    }

    fn templates(&self) -> &TemplateSet {
        self.inner.templates()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_splits_documents_from_thoughts() {
        let parents = [
            ParentInput { text: "t", kind: ThoughtKind::Generated },
            ParentInput { text: "d", kind: ThoughtKind::Document },
        ];
        assert_eq!(route_parents(&parents), ("t".to_string(), "d".to_string()));
        let parents = [
            ParentInput { text: "q", kind: ThoughtKind::Query },
            ParentInput { text: "t", kind: ThoughtKind::Generated },
        ];
        assert_eq!(route_parents(&parents), ("q\n\nt".to_string(), String::new()));
    }

    #[test]
    fn counting_wrapper_counts_every_call() {
        let sim = SimulatedGenerator::default();
        let c = CountingGenerator::new(&sim);
        let p = ParentInput { text: "fact:a=1", kind: ThoughtKind::Document };
        c.generate_thought([p, p], "ask:a").unwrap();
        c.answer("ask:a", None).unwrap();
        c.formulate_retrieval_query("", "ask:a").unwrap();
        c.score_tokens("ask:a", &["1", "0"]).unwrap();
        c.complete("ask:a").unwrap();
        let _ = c.templates();
        assert_eq!(c.calls(), 5);
    }
}
