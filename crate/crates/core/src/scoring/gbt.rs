//! Gradient-boosted regression trees with squared loss.
//!
//! Features are pre-binned once (at most `max_bins` cut points per feature)
//! and every split search runs over per-node histograms.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            max_bins: 64,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostedTrees {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GradientBoostedTrees {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn fit(features: &[Vec<f64>], labels: &[f64], config: &GbtConfig) -> Self {
        let n = labels.len();
        let base = if n == 0 { 0.0 } else { labels.iter().sum::<f64>() / n as f64 };
        let mut model = Self {
            base,
            learning_rate: config.learning_rate,
            trees: Vec::with_capacity(config.rounds),
        };
        if n == 0 || features.is_empty() {
            return model;
        }
        let binned = Binned::new(features, config.max_bins.clamp(2, 256));
        let mut pred = vec![base; n];
        let mut residual = vec![0.0; n];
        for _ in 0..config.rounds {
            for i in 0..n {
                residual[i] = labels[i] - pred[i];
            }
            let (tree, leaf_of) = build_tree(&binned, &residual, config);
            for i in 0..n {
                if let TreeNode::Leaf { value } = tree.nodes[leaf_of[i] as usize] {
                    pred[i] += config.learning_rate * value;
                }
            }
            model.trees.push(tree);
        }
        model
    }
}

struct Binned {
    n: usize,
    n_features: usize,
    /// Cut points per feature; bin `b` holds values in `(cuts[b-1], cuts[b]]`.
    cuts: Vec<Vec<f64>>,
    /// Feature-major bin indices.
    bins: Vec<u8>,
}

impl Binned {
    fn new(features: &[Vec<f64>], max_bins: usize) -> Self {
        let n = features.len();
        let n_features = features[0].len();
        let mut cuts = Vec::with_capacity(n_features);
        let mut bins = vec![0u8; n * n_features];
        let mut column = vec![0.0; n];
        for f in 0..n_features {
            for (i, row) in features.iter().enumerate() {
                column[i] = row[f];
            }
            let mut sorted = column.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let feature_cuts: Vec<f64> = if sorted.len() <= max_bins {
                sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|q| {
                        let idx = q * sorted.len() / max_bins;
                        0.5 * (sorted[idx - 1] + sorted[idx])
                    })
                    .collect();
                c.dedup();
                c
            };
            for (i, &v) in column.iter().enumerate() {
                bins[f * n + i] = feature_cuts.partition_point(|&c| c < v) as u8;
            }
            cuts.push(feature_cuts);
        }
        Self {
            n,
            n_features,
            cuts,
            bins,
        }
    }

    fn bin(&self, feature: usize, sample: usize) -> usize {
        self.bins[feature * self.n + sample] as usize
    }
}

struct Candidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

fn best_split(binned: &Binned, samples: &[u32], residual: &[f64], min_leaf: usize) -> Option<Candidate> {
    let total: f64 = samples.iter().map(|&i| residual[i as usize]).sum();
    let count = samples.len();
    let parent_score = total * total / count as f64;
    let mut best: Option<Candidate> = None;
    let mut sums = [0.0f64; 257];
    let mut counts = [0usize; 257];
    for f in 0..binned.n_features {
        let n_bins = binned.cuts[f].len() + 1;
        if n_bins < 2 {
            continue;
        }
        sums[..n_bins].iter_mut().for_each(|s| *s = 0.0);
        counts[..n_bins].iter_mut().for_each(|c| *c = 0);
        for &i in samples {
            let b = binned.bin(f, i as usize);
            sums[b] += residual[i as usize];
            counts[b] += 1;
        }
        let mut left_sum = 0.0;
        let mut left_count = 0usize;
        for b in 0..n_bins - 1 {
            left_sum += sums[b];
            left_count += counts[b];
            let right_count = count - left_count;
            if left_count < min_leaf || right_count < min_leaf {
                continue;
            }
            if counts[b] == 0 {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / left_count as f64 + right_sum * right_sum / right_count as f64 - parent_score;
            if gain > 1e-12 && best.as_ref().is_none_or(|c| gain > c.gain) {
                best = Some(Candidate { feature: f, bin: b, gain });
            }
        }
    }
    best
}

fn build_tree(binned: &Binned, residual: &[f64], config: &GbtConfig) -> (Tree, Vec<u32>) {
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut leaf_of = vec![0u32; binned.n];
    let mut frontier: Vec<(u32, Vec<u32>)> = vec![(0, (0..binned.n as u32).collect())];
    let min_leaf = config.min_samples_leaf.max(1);
    for depth in 0..=config.max_depth {
        let mut next = Vec::new();
        for (node, samples) in frontier {
            let split = if depth < config.max_depth && samples.len() >= 2 * min_leaf {
                best_split(binned, &samples, residual, min_leaf)
            } else {
                None
            };
            match split {
                Some(c) => {
                    let (left, right): (Vec<u32>, Vec<u32>) =
                        samples.iter().partition(|&&i| binned.bin(c.feature, i as usize) <= c.bin);
                    let l = nodes.len() as u32;
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[node as usize] = TreeNode::Split {
                        feature: c.feature as u32,
                        threshold: binned.cuts[c.feature][c.bin],
                        left: l,
                        right: l + 1,
                    };
                    next.push((l, left));
                    next.push((l + 1, right));
                }
                None => {
                    let value = samples.iter().map(|&i| residual[i as usize]).sum::<f64>() / samples.len().max(1) as f64;
                    nodes[node as usize] = TreeNode::Leaf { value };
                    for &i in &samples {
                        leaf_of[i as usize] = node;
                    }
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    (Tree { nodes }, leaf_of)
}
