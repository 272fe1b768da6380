//! The thought process as a deterministic state machine.
//!
//! A [`ThoughtGraph`] starts from the query node and grows by one generated
//! thought per transition. Documents are injected as source nodes. The graph
//! never forgets: nodes are append-only and ids are dense in creation order,
//! so a node's `step` equals its id.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("query text must not be empty")]
    EmptyQuery,
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("step budget of {0} generated thoughts exhausted")]
    BudgetExhausted(usize),
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThoughtKind {
    Query,
    Generated,
    Document,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thought {
    pub id: NodeId,
    pub text: String,
    pub kind: ThoughtKind,
    pub parents: Vec<NodeId>,
    pub step: usize,
    /// Corpus document id for `Document` nodes.
    pub doc_id: Option<u32>,
}

/// Search statistics kept per node. Only the planner writes these.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeStats {
    pub visits: u64,
    pub cumulative_score: f64,
    pub children: Vec<NodeId>,
    /// Score assigned when the node was simulated.
    pub sim_score: Option<f64>,
}

impl NodeStats {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.cumulative_score / self.visits as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub first: NodeId,
    pub second: NodeId,
}

impl Action {
    pub fn new(first: NodeId, second: NodeId) -> Self {
        Self { first, second }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: Action,
    pub produced: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub gamma: f64,
    pub stop_threshold: f64,
    pub exploration_c: f64,
    pub p_doc: f64,
    pub doc_batch_size: usize,
    pub thought_sample_size: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: 10,
            gamma: 1.0,
            stop_threshold: 0.5,
            exploration_c: std::f64::consts::SQRT_2,
            p_doc: 0.5,
            doc_batch_size: 2,
            thought_sample_size: 5,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        let bad = |msg: &str| Err(MdpError::InvalidConfig(msg.to_string()));
        if self.max_steps < 1 {
            return bad("max_steps must be >= 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !self.stop_threshold.is_finite() {
            return bad("stop_threshold must be finite");
        }
        if !(self.exploration_c >= 0.0 && self.exploration_c.is_finite()) {
            return bad("exploration_c must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.p_doc) {
            return bad("p_doc must lie in [0, 1]");
        }
        if self.doc_batch_size < 1 {
            return bad("doc_batch_size must be >= 1");
        }
        if self.thought_sample_size < 1 {
            return bad("thought_sample_size must be >= 1");
        }
        Ok(())
    }
}

/// Discounted return of an episode whose only nonzero reward arrives at `horizon`.
pub fn episodic_return(reward_at_t: f64, horizon: usize, gamma: f64) -> Result<f64, MdpError> {
    if horizon < 1 {
        return Err(MdpError::InvalidConfig("horizon must be >= 1".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(MdpError::InvalidConfig("gamma must lie in (0, 1]".into()));
    }
    Ok(gamma.powi(horizon as i32) * reward_at_t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThoughtGraph {
    nodes: Vec<Thought>,
    stats: Vec<NodeStats>,
    history: Vec<HistoryEntry>,
    query_text: String,
    max_steps: usize,
}

impl ThoughtGraph {
    pub const ROOT: NodeId = NodeId(0);

    /// Starts a thought process whose only node is the query.
    pub fn new(query: &str, max_steps: usize) -> Result<Self, MdpError> {
        if query.trim().is_empty() {
            return Err(MdpError::EmptyQuery);
        }
        if max_steps < 1 {
            return Err(MdpError::InvalidConfig("max_steps must be >= 1".into()));
        }
        let root = Thought {
            id: Self::ROOT,
            text: query.to_string(),
            kind: ThoughtKind::Query,
            parents: Vec::new(),
            step: 0,
            doc_id: None,
        };
        Ok(Self {
            nodes: vec![root],
            stats: vec![NodeStats::default()],
            history: Vec::new(),
            query_text: query.to_string(),
            max_steps,
        })
    }

    pub fn query_text(&self) -> &str {
        &self.query_text
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Thought] {
        &self.nodes
    }

    pub fn all_stats(&self) -> &[NodeStats] {
        &self.stats
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn node(&self, id: NodeId) -> Result<&Thought, MdpError> {
        self.nodes.get(id.0).ok_or(MdpError::UnknownNode(id))
    }

    pub fn stats(&self, id: NodeId) -> Result<&NodeStats, MdpError> {
        self.stats.get(id.0).ok_or(MdpError::UnknownNode(id))
    }

    pub fn stats_mut(&mut self, id: NodeId) -> Result<&mut NodeStats, MdpError> {
        self.stats.get_mut(id.0).ok_or(MdpError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    pub fn generated_count(&self) -> usize {
        self.history.len()
    }

    pub fn budget_left(&self) -> usize {
        self.max_steps - self.generated_count()
    }

    pub fn generated_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.history.iter().map(|h| h.produced)
    }

    /// Ids of every query or generated node, in creation order.
    pub fn thought_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|t| t.kind != ThoughtKind::Document)
            .map(|t| t.id)
    }

    pub fn find_document(&self, doc_id: u32) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|t| t.kind == ThoughtKind::Document && t.doc_id == Some(doc_id))
            .map(|t| t.id)
    }

    /// Registers a retrieved document as a source node, reusing the existing
    /// node when the same corpus document was already added.
    pub fn add_document(&mut self, doc_id: u32, text: &str) -> NodeId {
        if let Some(id) = self.find_document(doc_id) {
            return id;
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Thought {
            id,
            text: text.to_string(),
            kind: ThoughtKind::Document,
            parents: Vec::new(),
            step: id.0,
            doc_id: Some(doc_id),
        });
        self.stats.push(NodeStats::default());
        id
    }

    /// Applies `action`, appending the generated thought `new_text`.
    pub fn apply_transition(&mut self, action: Action, new_text: &str) -> Result<NodeId, MdpError> {
        for id in [action.first, action.second] {
            if !self.contains(id) {
                return Err(MdpError::UnknownNode(id));
            }
        }
        if self.generated_count() >= self.max_steps {
            return Err(MdpError::BudgetExhausted(self.max_steps));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Thought {
            id,
            text: new_text.to_string(),
            kind: ThoughtKind::Generated,
            parents: vec![action.first, action.second],
            step: id.0,
            doc_id: None,
        });
        self.stats.push(NodeStats::default());
        for parent in distinct_pair(action) {
            self.stats[parent.0].children.push(id);
        }
        self.history.push(HistoryEntry { action, produced: id });
        Ok(id)
    }

    /// Distinct proper ancestors of `id` reachable without passing through a
    /// document, in ascending id order.
    pub fn thought_ancestors(&self, id: NodeId) -> Result<Vec<NodeId>, MdpError> {
        self.node(id)?;
        let mut seen = BTreeSet::new();
        let mut stack = self.nodes[id.0].parents.clone();
        while let Some(p) = stack.pop() {
            if self.nodes[p.0].kind == ThoughtKind::Document || !seen.insert(p) {
                continue;
            }
            stack.extend(self.nodes[p.0].parents.iter().copied());
        }
        Ok(seen.into_iter().collect())
    }

    /// Kahn topological order over parent edges; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in &self.nodes {
            for p in &t.parents {
                if p.0 >= n {
                    return None;
                }
                indegree[t.id.0] += 1;
                out[p.0].push(t.id.0);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(NodeId(i));
            for &c in &out[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Rebuilds a graph from stored parts. Children lists are derived from
    /// parent edges.
    pub(crate) fn from_parts(
        query_text: String,
        max_steps: usize,
        nodes: Vec<Thought>,
        mut stats: Vec<NodeStats>,
        history: Vec<HistoryEntry>,
    ) -> Self {
        for s in stats.iter_mut() {
            s.children.clear();
        }
        for h in &history {
            for parent in distinct_pair(h.action) {
                stats[parent.0].children.push(h.produced);
            }
        }
        Self {
            nodes,
            stats,
            history,
            query_text,
            max_steps,
        }
    }
}

fn distinct_pair(action: Action) -> impl Iterator<Item = NodeId> {
    let second = (action.second != action.first).then_some(action.second);
    std::iter::once(action.first).chain(second)
}
