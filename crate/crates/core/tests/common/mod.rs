//! Shared generators and independent reference implementations.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thought_planner::mdp::{Action, NodeId, ThoughtGraph, ThoughtKind};

/// Random thought graph with up to `max_nodes` nodes: documents and
/// generated thoughts mixed, every node given random statistics.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> ThoughtGraph {
    let target = rng.gen_range(1..=max_nodes.max(1));
    let mut g = ThoughtGraph::new("query", target).unwrap();
    let mut doc_id = 0u32;
    while g.len() < target {
        if rng.gen_bool(0.25) {
            g.add_document(doc_id, &format!("doc {doc_id}"));
            doc_id += 1;
            continue;
        }
        let thoughts: Vec<NodeId> = g.thought_ids().collect();
        let first = thoughts[rng.gen_range(0..thoughts.len())];
        let second = NodeId(rng.gen_range(0..g.len()));
        let n = g.len();
        g.apply_transition(Action::new(first, second), &format!("t{n}")).unwrap();
    }
    for i in 0..g.len() {
        let s = g.stats_mut(NodeId(i)).unwrap();
        s.visits = rng.gen_range(1..50);
        s.cumulative_score = rng.gen_range(0.0..s.visits as f64);
    }
    g
}

/// UCT evaluated through a different algebraic route than the library.
pub fn uct_reference(q: f64, n: u64, parent: u64, c: f64) -> f64 {
    let ln_parent = (parent as f64).log2() * std::f64::consts::LN_2;
    q / n as f64 + c * ln_parent.sqrt() / (n as f64).sqrt()
}

/// Children derived from parent lists alone (documents excluded).
pub fn children_from_parents(g: &ThoughtGraph) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut out: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for t in g.nodes() {
        if t.kind == ThoughtKind::Document {
            continue;
        }
        for &p in &t.parents {
            out.entry(p).or_default().insert(t.id);
        }
    }
    out
}

/// Walks from the root, at each node scoring every child and keeping the
/// maximum (smallest id among exact ties).
pub fn select_reference(g: &ThoughtGraph, c: f64) -> NodeId {
    let children = children_from_parents(g);
    let mut cur = NodeId(0);
    loop {
        let Some(kids) = children.get(&cur).filter(|k| !k.is_empty()) else {
            return cur;
        };
        let parent = g.stats(cur).unwrap().visits.max(1);
        let scored: Vec<(f64, NodeId)> = kids
            .iter()
            .map(|&k| {
                let s = g.stats(k).unwrap();
                (uct_reference(s.cumulative_score, s.visits.max(1), parent, c), k)
            })
            .collect();
        let max = scored.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
        // ties within rounding of the alternative algebra resolve by id
        cur = scored
            .iter()
            .filter(|(v, _)| (v - max).abs() <= 1e-12 * max.abs().max(1.0))
            .map(|(_, k)| *k)
            .min()
            .unwrap();
    }
}

/// Every non-document node reachable from `id` through parent edges.
pub fn ancestor_set(g: &ThoughtGraph, id: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut frontier: Vec<NodeId> = g.node(id).unwrap().parents.clone();
    while let Some(p) = frontier.pop() {
        let t = g.node(p).unwrap();
        if t.kind == ThoughtKind::Document {
            continue;
        }
        if seen.insert(p) {
            frontier.extend(t.parents.iter().copied());
        }
    }
    seen
}

/// Memoized recursive longest common subsequence.
pub fn lcs_reference<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len()]; a.len()];
    go(a, b, 0, 0, &mut memo)
}

pub fn rouge_reference<T: PartialEq>(pred: &[T], gold: &[T]) -> f64 {
    let l = lcs_reference(pred, gold) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / pred.len() as f64;
    let r = l / gold.len() as f64;
    2.0 * p * r / (p + r)
}
