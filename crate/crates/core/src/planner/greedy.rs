//! Non-tree policies sharing the search termination contract: the greedy
//! estimator argmax and a uniform random-pairing control.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    backpropagate, generate_into, record_score, simulate, termination, DocumentSource, Retriever, SearchError,
    SearchFailure, SearchOutcome, SearchPorts,
};
use crate::generator::{CountingGenerator, Generator};
use crate::mdp::{Action, EpisodeConfig, NodeId, ThoughtGraph};
use crate::scoring::PairEstimator;

#[derive(Clone, Copy)]
pub struct GreedyPorts<'a> {
    pub generator: &'a dyn Generator,
    pub retriever: Option<Retriever<'a>>,
    pub estimator: &'a dyn PairEstimator,
}

/// Second element of a candidate pair: an existing node or a document still
/// waiting in the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Partner {
    Node(NodeId),
    Pending(u32),
}

struct Choice {
    first: NodeId,
    partner: Partner,
    estimate: f64,
}

/// Argmax over ordered pairs `(thought, any node or pending document)`.
/// Pending documents rank after existing nodes in tie-breaking, in queue
/// order. With `fresh_only`, self-pairs and already applied actions are
/// skipped.
fn best_pair(
    graph: &ThoughtGraph,
    pending: &[(u32, &str)],
    estimator: &dyn PairEstimator,
    fresh_only: bool,
    evaluations: &mut u64,
) -> Result<Option<Choice>, SearchFailure> {
    let used: BTreeSet<Action> = graph.history().iter().map(|h| h.action).collect();
    let firsts: Vec<NodeId> = graph.thought_ids().collect();
    let mut best: Option<Choice> = None;
    for &first in &firsts {
        let first_text = graph.nodes()[first.0].text.as_str();
        let existing = graph.nodes().iter().map(|t| (Partner::Node(t.id), t.text.as_str()));
        let queued = pending.iter().map(|&(id, text)| (Partner::Pending(id), text));
        for (partner, text) in existing.chain(queued) {
            if fresh_only {
                if let Partner::Node(second) = partner {
                    if second == first || used.contains(&Action::new(first, second)) {
                        continue;
                    }
                }
            }
            *evaluations += 1;
            let mut estimate = estimator.estimate(first_text, text)?;
            if estimate.is_nan() {
                estimate = f64::NEG_INFINITY;
            }
            // candidates arrive in (first, second) order: strict > keeps the lowest pair
            if best.as_ref().is_none_or(|b| estimate > b.estimate) {
                best = Some(Choice {
                    first,
                    partner,
                    estimate,
                });
            }
        }
    }
    Ok(best)
}

/// At every step applies the pair with the highest estimated reward.
pub fn greedy_search(query: &str, ports: GreedyPorts<'_>, config: &EpisodeConfig) -> Result<SearchOutcome, SearchError> {
    config.validate().map_err(|e| SearchError::new(e, None))?;
    let mut graph = ThoughtGraph::new(query, config.max_steps).map_err(|e| SearchError::new(e, None))?;
    let generator = CountingGenerator::new(ports.generator);
    let mut docs = ports.retriever.map(|r| DocumentSource::new(r, config.doc_batch_size));
    let mut evaluations = 0u64;
    loop {
        let step = (|| {
            let mut pending: Vec<(u32, String)> = Vec::new();
            if let Some(source) = docs.as_mut() {
                if source.ensure_pending(&graph, &generator)? {
                    let index = source.retriever().index;
                    pending = source
                        .queue()
                        .pending()
                        .filter_map(|id| index.document(id).map(|d| (id, d.text.clone())))
                        .collect();
                }
            }
            let pending_refs: Vec<(u32, &str)> = pending.iter().map(|(id, t)| (*id, t.as_str())).collect();
            let choice = match best_pair(&graph, &pending_refs, ports.estimator, true, &mut evaluations)? {
                Some(c) => c,
                None => best_pair(&graph, &pending_refs, ports.estimator, false, &mut evaluations)?
                    .expect("the root always pairs with itself"),
            };
            let second = match choice.partner {
                Partner::Node(id) => id,
                Partner::Pending(doc_id) => docs
                    .as_mut()
                    .expect("pending documents imply a retriever")
                    .take_into(&mut graph, doc_id)?,
            };
            let node = generate_into(&mut graph, Action::new(choice.first, second), &generator)?;
            let score = choice.estimate.clamp(0.0, 1.0);
            record_score(&mut graph, node, score)?;
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
                    scorer_calls: evaluations,
                    retrieval_calls: docs.as_ref().map_or(0, |d| d.refills() as u64),
                })
            }
            Err(e) => return Err(SearchError::new(e, Some(graph))),
        }
    }
}

/// Control policy: pairs a uniformly drawn thought with a uniformly drawn
/// partner among existing nodes plus one unseen corpus document, ignoring
/// both similarity and scores. Scores still decide termination.
pub fn random_search(query: &str, ports: SearchPorts<'_>, config: &EpisodeConfig, seed: u64) -> Result<SearchOutcome, SearchError> {
    config.validate().map_err(|e| SearchError::new(e, None))?;
    let mut graph = ThoughtGraph::new(query, config.max_steps).map_err(|e| SearchError::new(e, None))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = CountingGenerator::new(ports.generator);
    let mut scorer_calls = 0u64;
    loop {
        let step = (|| {
            let thoughts: Vec<NodeId> = graph.thought_ids().collect();
            let first = *thoughts.choose(&mut rng).expect("root exists");
            let fresh_doc = ports.retriever.and_then(|r| {
                let unseen: Vec<_> = r
                    .index
                    .documents
                    .iter()
                    .filter(|d| r.filter.is_none_or(|f| d.filter_key.as_deref() == Some(f)))
                    .filter(|d| graph.find_document(d.doc_id).is_none())
                    .collect();
                unseen.choose(&mut rng).copied()
            });
            let others: Vec<NodeId> = (0..graph.len()).map(NodeId).filter(|&id| id != first).collect();
            let options = others.len() + usize::from(fresh_doc.is_some());
            let second = if options == 0 {
                first
            } else {
                let pick = rng.gen_range(0..options);
                match others.get(pick) {
                    Some(&id) => id,
                    None => {
                        let doc = fresh_doc.expect("counted above");
                        graph.add_document(doc.doc_id, &doc.text)
                    }
                }
            };
            let node = generate_into(&mut graph, Action::new(first, second), &generator)?;
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
                    retrieval_calls: 0,
                })
            }
            Err(e) => return Err(SearchError::new(e, Some(graph))),
        }
    }
}
