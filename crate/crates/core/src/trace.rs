//! Versioned JSON trace of a thought process, plus Graphviz rendering.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Action, HistoryEntry, NodeId, NodeStats, Thought, ThoughtGraph, ThoughtKind};
use crate::planner::{SearchOutcome, Termination};

pub const TRACE_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u64 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unsupported trace version `{0}`")]
    Version(String),
    #[error("malformed trace: {0}")]
    Schema(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceNode {
    pub id: usize,
    pub kind: ThoughtKind,
    pub text: String,
    pub parents: Vec<usize>,
    pub step: usize,
    /// Cumulative backpropagated score.
    pub score: f64,
    pub visits: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub first: usize,
    pub second: usize,
    pub produced: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceOutcome {
    pub best_thought: usize,
    pub terminated_by: Termination,
    pub generator_calls: u64,
    pub scorer_calls: u64,
    pub retrieval_calls: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    pub version: String,
    pub query: String,
    pub max_steps: usize,
    pub nodes: Vec<TraceNode>,
    pub history: Vec<TraceStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TraceOutcome>,
    /// Set when the search failed and this is the partial graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trace {
    pub fn from_graph(graph: &ThoughtGraph) -> Self {
        let nodes = graph
            .nodes()
            .iter()
            .zip(graph.all_stats())
            .map(|(t, s)| TraceNode {
                id: t.id.0,
                kind: t.kind,
                text: t.text.clone(),
                parents: t.parents.iter().map(|p| p.0).collect(),
                step: t.step,
                score: s.cumulative_score,
                visits: s.visits,
                sim_score: s.sim_score,
                doc_id: t.doc_id,
            })
            .collect();
        let history = graph
            .history()
            .iter()
            .map(|h| TraceStep {
                first: h.action.first.0,
                second: h.action.second.0,
                produced: h.produced.0,
            })
            .collect();
        Self {
            version: TRACE_VERSION.to_string(),
            query: graph.query_text().to_string(),
            max_steps: graph.max_steps(),
            nodes,
            history,
            outcome: None,
            error: None,
        }
    }

    pub fn from_outcome(outcome: &SearchOutcome, answer: Option<String>) -> Self {
        let mut trace = Self::from_graph(&outcome.graph);
        trace.outcome = Some(TraceOutcome {
            best_thought: outcome.best_thought.0,
            terminated_by: outcome.terminated_by,
            generator_calls: outcome.generator_calls,
            scorer_calls: outcome.scorer_calls,
            retrieval_calls: outcome.retrieval_calls,
            answer,
        });
        trace
    }

    /// Rebuilds the graph, checking every structural invariant.
    pub fn to_graph(&self) -> Result<ThoughtGraph, TraceError> {
        let schema = |msg: String| Err(TraceError::Schema(msg));
        if self.query.trim().is_empty() {
            return schema("query: must not be empty".into());
        }
        if self.max_steps < 1 {
            return schema("max_steps: must be >= 1".into());
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut stats = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return schema(format!("nodes[{i}].id: expected {i}, found {}", n.id));
            }
            let expect_query = i == 0;
            if (n.kind == ThoughtKind::Query) != expect_query {
                return schema(format!("nodes[{i}].kind: exactly the first node must be the query"));
            }
            let want_parents = if n.kind == ThoughtKind::Generated { 2 } else { 0 };
            if n.parents.len() != want_parents {
                return schema(format!("nodes[{i}].parents: a {:?} node needs {want_parents}", n.kind));
            }
            if let Some(&p) = n.parents.iter().find(|&&p| p >= i) {
                return schema(format!("nodes[{i}].parents: {p} does not precede the node"));
            }
            if (n.kind == ThoughtKind::Document) != n.doc_id.is_some() {
                return schema(format!("nodes[{i}].doc_id: present exactly on document nodes"));
            }
            nodes.push(Thought {
                id: NodeId(i),
                text: n.text.clone(),
                kind: n.kind,
                parents: n.parents.iter().copied().map(NodeId).collect(),
                step: n.step,
                doc_id: n.doc_id,
            });
            stats.push(NodeStats {
                visits: n.visits,
                cumulative_score: n.score,
                children: Vec::new(),
                sim_score: n.sim_score,
            });
        }
        if nodes.is_empty() {
            return schema("nodes: the query node is missing".into());
        }
        if self.nodes[0].text != self.query {
            return schema("nodes[0].text: differs from query".into());
        }
        let generated: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.kind == ThoughtKind::Generated)
            .map(|n| n.id)
            .collect();
        if generated.len() != self.history.len() {
            return schema(format!(
                "history: {} entries for {} generated nodes",
                self.history.len(),
                generated.len()
            ));
        }
        if generated.len() > self.max_steps {
            return schema("history: more generated nodes than max_steps".into());
        }
        let mut history = Vec::with_capacity(self.history.len());
        for (k, (h, &g)) in self.history.iter().zip(&generated).enumerate() {
            if h.produced != g || self.nodes[g].parents != [h.first, h.second] {
                return schema(format!("history[{k}]: does not match node {g}"));
            }
            history.push(HistoryEntry {
                action: Action::new(NodeId(h.first), NodeId(h.second)),
                produced: NodeId(g),
            });
        }
        if let Some(o) = &self.outcome {
            if !generated.contains(&o.best_thought) {
                return schema(format!("outcome.best_thought: {} is not a generated node", o.best_thought));
            }
        }
        Ok(ThoughtGraph::from_parts(self.query.clone(), self.max_steps, nodes, stats, history))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| TraceError::Schema(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| TraceError::Schema("version: missing or not a string".into()))?;
        let major = version.split('.').next().and_then(|m| m.parse::<u64>().ok());
        if major != Some(SUPPORTED_MAJOR) {
            return Err(TraceError::Version(version.to_string()));
        }
        let trace: Self = serde_json::from_value(value).map_err(|e| TraceError::Schema(e.to_string()))?;
        trace.to_graph()?;
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        fs::write(path, self.to_json()).map_err(|e| TraceError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path).map_err(|e| TraceError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Distinct parent→child edges in node order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in &self.nodes {
            let distinct: BTreeSet<usize> = n.parents.iter().copied().collect();
            out.extend(distinct.into_iter().map(|p| (p, n.id)));
        }
        out
    }

    pub fn to_graphviz(&self) -> String {
        let mut out = String::from("digraph thoughts {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n");
        let best = self.outcome.as_ref().map(|o| o.best_thought);
        for n in &self.nodes {
            let (shape, kind) = match n.kind {
                ThoughtKind::Query => ("doubleoctagon", "query"),
                ThoughtKind::Document => ("note", "document"),
                ThoughtKind::Generated => ("box", "thought"),
            };
            let mut label = format!("#{} {kind}", n.id);
            if n.kind == ThoughtKind::Generated {
                let mean = if n.visits == 0 { 0.0 } else { n.score / n.visits as f64 };
                let _ = write!(label, "\nscore={:.3} visits={} mean={mean:.3}", n.sim_score.unwrap_or(0.0), n.visits);
            }
            let _ = write!(label, "\n{}", excerpt(&n.text, 60));
            let style = if best == Some(n.id) { ", style=bold, color=darkgreen" } else { "" };
            let _ = writeln!(out, "  n{} [shape={shape}, label=\"{}\"{style}];", n.id, escape(&label));
        }
        for (p, c) in self.edges() {
            let _ = writeln!(out, "  n{p} -> n{c};");
        }
        out.push_str("}\n");
        out
    }
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= max_chars {
        flat
    } else {
        let cut: String = flat.chars().take(max_chars).collect();
        format!("{cut}...")
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}
