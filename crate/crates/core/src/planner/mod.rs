//! Monte-Carlo tree search over the thought graph: UCT selection,
//! document-or-thought expansion, scorer simulation and ancestor
//! backpropagation. `greedy` holds the one-step argmax baseline and the
//! random-pairing control.

mod greedy;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use greedy::{greedy_search, random_search, GreedyPorts};

use crate::generator::{CountingGenerator, Generator, GeneratorError, ParentInput};
use crate::mdp::{Action, EpisodeConfig, MdpError, NodeId, ThoughtGraph, ThoughtKind};
use crate::retrieval::{CorpusIndex, DocumentQueue, Embedder, RetrievalError};
use crate::scoring::{ScoreInput, Scorer, ScoringError};

#[derive(Debug, Error)]
pub enum SearchFailure {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

impl SearchFailure {
    /// Whether a backend endpoint, rather than the search, failed.
    pub fn is_transport(&self) -> bool {
        match self {
            Self::Mdp(_) => false,
            Self::Generator(e) => e.is_transport(),
            Self::Scoring(e) => e.is_transport(),
            Self::Retrieval(e) => e.is_transport(),
        }
    }
}

/// A failed search, carrying whatever graph had been built for trace export.
#[derive(Debug, Error)]
#[error("search failed after {} generated thoughts: {failure}", partial.as_ref().map_or(0, |g| g.generated_count()))]
pub struct SearchError {
    #[source]
    pub failure: SearchFailure,
    pub partial: Option<Box<ThoughtGraph>>,
}

impl SearchError {
    fn new(failure: impl Into<SearchFailure>, partial: Option<ThoughtGraph>) -> Self {
        Self {
            failure: failure.into(),
            partial: partial.map(Box::new),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ThresholdReached,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub graph: ThoughtGraph,
    pub best_thought: NodeId,
    pub terminated_by: Termination,
    pub generator_calls: u64,
    pub scorer_calls: u64,
    /// Retrieval calls issued to refill the document queue.
    pub retrieval_calls: u64,
}

/// Text used to issue a retrieval call when the document queue runs dry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// The query itself.
    #[default]
    Raw,
    /// An LLM-formulated query from the best thought so far.
    Formulated,
}

/// Corpus access for one search.
#[derive(Clone, Copy)]
pub struct Retriever<'a> {
    pub index: &'a CorpusIndex,
    pub embedder: &'a dyn Embedder,
    pub filter: Option<&'a str>,
    pub query_mode: QueryMode,
}

/// A corpus shared by many searches; each search narrows it with its own
/// filter key.
#[derive(Clone, Copy)]
pub struct CorpusPort<'a> {
    pub index: &'a CorpusIndex,
    pub embedder: &'a dyn Embedder,
    pub query_mode: QueryMode,
}

impl<'a> CorpusPort<'a> {
    pub fn retriever(&self, filter: Option<&'a str>) -> Retriever<'a> {
        Retriever {
            index: self.index,
            embedder: self.embedder,
            filter,
            query_mode: self.query_mode,
        }
    }
}

#[derive(Clone, Copy)]
pub struct SearchPorts<'a> {
    pub generator: &'a dyn Generator,
    /// `None` disables information retrieval entirely.
    pub retriever: Option<Retriever<'a>>,
    pub scorer: &'a dyn Scorer,
}

/// A retriever plus the per-search queue it feeds.
pub struct DocumentSource<'a> {
    retriever: Retriever<'a>,
    queue: DocumentQueue,
}

impl<'a> DocumentSource<'a> {
    pub fn new(retriever: Retriever<'a>, batch_size: usize) -> Self {
        Self {
            retriever,
            queue: DocumentQueue::new(batch_size, retriever.filter.map(str::to_string)),
        }
    }

    pub fn queue(&self) -> &DocumentQueue {
        &self.queue
    }

    pub fn retriever(&self) -> &Retriever<'a> {
        &self.retriever
    }

    fn retrieval_text(&self, graph: &ThoughtGraph, generator: &dyn Generator) -> String {
        let query = graph.query_text();
        match self.retriever.query_mode {
            QueryMode::Raw => query.to_string(),
            QueryMode::Formulated => {
                let best = best_mean_generated(graph).map_or(query, |id| graph.nodes()[id.0].text.as_str());
                generator.formulate_retrieval_query(best, query).unwrap_or_else(|e| {
                    log::warn!("retrieval query formulation failed ({e}); using the raw query");
                    query.to_string()
                })
            }
        }
    }

    /// Refills the queue if needed. `Ok(false)` means the corpus has nothing
    /// left to serve.
    pub fn ensure_pending(&mut self, graph: &ThoughtGraph, generator: &dyn Generator) -> Result<bool, RetrievalError> {
        let text = if self.queue.pending().next().is_none() {
            self.retrieval_text(graph, generator)
        } else {
            String::new()
        };
        let mut provider = || text.clone();
        match self
            .queue
            .ensure_pending(self.retriever.index, self.retriever.embedder, &mut provider)
        {
            Ok(()) => Ok(true),
            Err(RetrievalError::Exhausted | RetrievalError::EmptyCorpus) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Pops the next document into the graph, or `None` when exhausted.
    pub fn next_into(&mut self, graph: &mut ThoughtGraph, generator: &dyn Generator) -> Result<Option<NodeId>, RetrievalError> {
        if !self.ensure_pending(graph, generator)? {
            return Ok(None);
        }
        let mut unused = String::new;
        let doc = self
            .queue
            .next(self.retriever.index, self.retriever.embedder, &mut unused)?;
        Ok(Some(graph.add_document(doc.doc_id, &doc.text)))
    }

    /// Moves a specific pending document into the graph.
    pub fn take_into(&mut self, graph: &mut ThoughtGraph, doc_id: u32) -> Result<NodeId, RetrievalError> {
        let doc = self.queue.take(self.retriever.index, doc_id)?;
        Ok(graph.add_document(doc.doc_id, &doc.text))
    }

    pub fn refills(&self) -> usize {
        self.queue.refills()
    }
}

/// `q/n + c * sqrt(ln(N) / n)`.
pub fn uct_value(q: f64, n: u64, parent_visits: u64, c: f64) -> f64 {
    debug_assert!(n >= 1 && parent_visits >= 1, "UCT needs visited nodes");
    let n = n as f64;
    q / n + c * ((parent_visits as f64).ln() / n).sqrt()
}

/// Descends from the root to a childless node, always following the child
/// with maximal UCT value (lowest id on ties).
pub fn select(graph: &ThoughtGraph, exploration_c: f64) -> NodeId {
    let mut current = ThoughtGraph::ROOT;
    loop {
        let stats = &graph.all_stats()[current.0];
        let parent_visits = stats.visits.max(1);
        let mut best: Option<(f64, NodeId)> = None;
        for &child in &stats.children {
            if graph.nodes()[child.0].kind == ThoughtKind::Document {
                continue;
            }
            let cs = &graph.all_stats()[child.0];
            let value = uct_value(cs.cumulative_score, cs.visits.max(1), parent_visits, exploration_c);
            let better = match best {
                None => true,
                Some((v, id)) => value > v || (value == v && child < id),
            };
            if better {
                best = Some((value, child));
            }
        }
        match best {
            Some((_, child)) => current = child,
            None => return current,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Document,
    Thought,
}

/// Draws `u ~ U[0, 1)`; the document branch is taken when `u < p_doc`.
pub fn draw_branch(rng: &mut impl Rng, p_doc: f64) -> Branch {
    if rng.gen::<f64>() < p_doc {
        Branch::Document
    } else {
        Branch::Thought
    }
}

/// Up to `sample_size` uniformly drawn non-document partners for `selected`
/// (the selected node itself only when nothing else exists), reduced to the
/// candidate with the best mean score, lowest id on ties.
pub fn pick_thought_partner(graph: &ThoughtGraph, selected: NodeId, sample_size: usize, rng: &mut impl Rng) -> NodeId {
    let pool: Vec<NodeId> = graph.thought_ids().filter(|&id| id != selected).collect();
    if pool.is_empty() {
        return selected;
    }
    let k = sample_size.clamp(1, pool.len());
    let mut best: Option<(f64, NodeId)> = None;
    for i in sample(rng, pool.len(), k).into_iter() {
        let id = pool[i];
        let mean = graph.all_stats()[id.0].mean();
        if best.is_none_or(|(m, b)| mean > m || (mean == m && id < b)) {
            best = Some((mean, id));
        }
    }
    best.expect("k >= 1").1
}

/// Generates the thought for `action` and appends it to the graph.
pub fn generate_into(graph: &mut ThoughtGraph, action: Action, generator: &dyn Generator) -> Result<NodeId, SearchFailure> {
    let text = {
        let a = graph.node(action.first)?;
        let b = graph.node(action.second)?;
        generator.generate_thought(
            [
                ParentInput {
                    text: &a.text,
                    kind: a.kind,
                },
                ParentInput {
                    text: &b.text,
                    kind: b.kind,
                },
            ],
            graph.query_text(),
        )?
    };
    Ok(graph.apply_transition(action, &text)?)
}

/// One expansion from `selected`: pair it with a fresh document or with an
/// existing thought, then generate the new thought.
pub fn expand(
    graph: &mut ThoughtGraph,
    selected: NodeId,
    docs: Option<&mut DocumentSource<'_>>,
    generator: &dyn Generator,
    rng: &mut impl Rng,
    config: &EpisodeConfig,
) -> Result<NodeId, SearchFailure> {
    graph.node(selected)?;
    if graph.budget_left() == 0 {
        return Err(MdpError::BudgetExhausted(graph.max_steps()).into());
    }
    let branch = draw_branch(rng, config.p_doc);
    let mut partner = None;
    if branch == Branch::Document {
        if let Some(source) = docs {
            partner = source.next_into(graph, generator)?;
            if partner.is_none() {
                log::debug!("document queue exhausted; pairing with a thought instead");
            }
        }
    }
    let partner = match partner {
        Some(p) => p,
        None => pick_thought_partner(graph, selected, config.thought_sample_size, rng),
    };
    generate_into(graph, Action::new(selected, partner), generator)
}

/// Scores a freshly generated node and seeds its statistics.
pub fn simulate(
    graph: &mut ThoughtGraph,
    node: NodeId,
    scorer: &dyn Scorer,
    generator: &dyn Generator,
) -> Result<f64, SearchFailure> {
    let score = {
        let t = graph.node(node)?;
        let parent_text = |i: usize| {
            t.parents
                .get(i)
                .map_or("", |p| graph.nodes()[p.0].text.as_str())
        };
        let input = ScoreInput {
            query: graph.query_text(),
            thought: &t.text,
            parents: [parent_text(0), parent_text(1)],
        };
        scorer.score(&input, generator)?
    };
    record_score(graph, node, score)?;
    Ok(score)
}

pub(crate) fn record_score(graph: &mut ThoughtGraph, node: NodeId, score: f64) -> Result<(), MdpError> {
    let stats = graph.stats_mut(node)?;
    stats.visits = 1;
    stats.cumulative_score = score;
    stats.sim_score = Some(score);
    Ok(())
}

/// Adds one visit and `score` to every distinct thought ancestor of `from`.
pub fn backpropagate(graph: &mut ThoughtGraph, from: NodeId, score: f64) -> Result<(), MdpError> {
    for id in graph.thought_ancestors(from)? {
        let stats = graph.stats_mut(id)?;
        stats.visits += 1;
        stats.cumulative_score += score;
    }
    Ok(())
}

/// Generated node with the highest mean score, lowest id on ties.
pub fn best_mean_generated(graph: &ThoughtGraph) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for id in graph.generated_ids() {
        let mean = graph.all_stats()[id.0].mean();
        if best.is_none_or(|(m, b)| mean > m || (mean == m && id < b)) {
            best = Some((mean, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Shared termination check after a node has been scored.
pub(crate) fn termination(graph: &ThoughtGraph, node: NodeId, score: f64, config: &EpisodeConfig) -> Option<(Termination, NodeId)> {
    if score >= config.stop_threshold {
        Some((Termination::ThresholdReached, node))
    } else if graph.budget_left() == 0 {
        Some((Termination::BudgetExhausted, best_mean_generated(graph).unwrap_or(node)))
    } else {
        None
    }
}

pub fn run_search(query: &str, ports: SearchPorts<'_>, config: &EpisodeConfig, seed: u64) -> Result<SearchOutcome, SearchError> {
    config.validate().map_err(|e| SearchError::new(e, None))?;
    let mut graph = ThoughtGraph::new(query, config.max_steps).map_err(|e| SearchError::new(e, None))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = CountingGenerator::new(ports.generator);
    let mut docs = ports.retriever.map(|r| DocumentSource::new(r, config.doc_batch_size));
    let mut scorer_calls = 0u64;
    loop {
        let step = (|| {
            let selected = select(&graph, config.exploration_c);
            let node = expand(&mut graph, selected, docs.as_mut(), &generator, &mut rng, config)?;
            scorer_calls += 1;
            let score = simulate(&mut graph, node, ports.scorer, &generator)?;
            backpropagate(&mut graph, node, score)?;
            Ok::<_, SearchFailure>(termination(&graph, node, score, config))
        })();
        match step {
            Ok(None) => {}
            Ok(Some((terminated_by, best_thought))) => {
                return Ok(SearchOutcome {
                    graph,
                    best_thought,
                    terminated_by,
                    generator_calls: generator.calls(),
                    scorer_calls,
                    retrieval_calls: docs.as_ref().map_or(0, |d| d.refills() as u64),
                })
            }
            Err(e) => return Err(SearchError::new(e, Some(graph))),
        }
    }
}
