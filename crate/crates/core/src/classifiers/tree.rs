//! CART decision trees: Gini-impurity classification and mean-leaf regression.
//!
//! Split thresholds are midpoints between consecutive distinct sorted values;
//! ties in split quality break toward the lowest feature index, then the
//! smallest threshold, so predictions do not depend on training row order.

use serde::{Deserialize, Serialize};

use super::Hyperparams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Scans one feature for the best split of `idx` under an impurity function.
///
/// `targets` holds either 0/1 labels or regression targets; `impurity`
/// receives (sum, sum of squares, count) of a child and returns its weighted
/// impurity contribution.
fn best_split_on_feature(
    feature: usize,
    idx: &[usize],
    features: &[Vec<f64>],
    targets: &[f64],
    min_leaf: usize,
    impurity: &dyn Fn(f64, f64, usize) -> f64,
) -> Option<(f64, f64)> {
    let mut vals: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| (features[i][feature], targets[i]))
        .collect();
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = vals.len();
    let total_sum: f64 = vals.iter().map(|v| v.1).sum();
    let total_sq: f64 = vals.iter().map(|v| v.1 * v.1).sum();

    let mut best: Option<(f64, f64)> = None; // (score, threshold)
    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    for i in 0..n - 1 {
        left_sum += vals[i].1;
        left_sq += vals[i].1 * vals[i].1;
        if vals[i + 1].0 <= vals[i].0 {
            continue; // not a boundary between distinct values
        }
        let nl = i + 1;
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let score = impurity(left_sum, left_sq, nl)
            + impurity(total_sum - left_sum, total_sq - left_sq, nr);
        let threshold = 0.5 * (vals[i].0 + vals[i + 1].0);
        let better = match best {
            None => true,
            Some((bs, bt)) => score < bs - 1e-12 || ((score - bs).abs() <= 1e-12 && threshold < bt),
        };
        if better {
            best = Some((score, threshold));
        }
    }
    best
}

fn build(
    nodes: &mut Vec<Node>,
    idx: Vec<usize>,
    depth: usize,
    features: &[Vec<f64>],
    targets: &[f64],
    hp: &Hyperparams,
    impurity: &dyn Fn(f64, f64, usize) -> f64,
) -> usize {
    let n = idx.len();
    let sum: f64 = idx.iter().map(|&i| targets[i]).sum();
    let mean = sum / n as f64;
    let pure = idx.iter().all(|&i| targets[i] == targets[idx[0]]);

    let mut choice: Option<SplitChoice> = None;
    if depth < hp.tree_max_depth && n >= 2 * hp.tree_min_leaf && !pure {
        let parent_score = impurity(
            sum,
            idx.iter().map(|&i| targets[i] * targets[i]).sum(),
            n,
        );
        let d = features[0].len();
        for f in 0..d {
            if let Some((score, threshold)) =
                best_split_on_feature(f, &idx, features, targets, hp.tree_min_leaf, impurity)
            {
                if score < parent_score - 1e-12 {
                    let better = match &choice {
                        None => true,
                        Some(c) => score < c.score - 1e-12,
                    };
                    if better {
                        choice = Some(SplitChoice {
                            feature: f,
                            threshold,
                            score,
                        });
                    }
                }
            }
        }
    }

    match choice {
        None => {
            nodes.push(Node::Leaf { value: mean });
            nodes.len() - 1
        }
        Some(c) => {
            let (li, ri): (Vec<usize>, Vec<usize>) = idx
                .into_iter()
                .partition(|&i| features[i][c.feature] <= c.threshold);
            let me = nodes.len();
            nodes.push(Node::Leaf { value: mean }); // placeholder
            let left = build(nodes, li, depth + 1, features, targets, hp, impurity);
            let right = build(nodes, ri, depth + 1, features, targets, hp, impurity);
            nodes[me] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
            };
            me
        }
    }
}

fn walk(nodes: &[Node], x: &[f64]) -> f64 {
    let mut cur = 0usize;
    loop {
        match &nodes[cur] {
            Node::Leaf { value } => return *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                cur = if x[*feature] <= *threshold { *left } else { *right };
            }
        }
    }
}

/// Weighted Gini impurity of a child given its positive count and size.
fn gini_part(sum: f64, _sq: f64, n: usize) -> f64 {
    let p = sum / n as f64;
    n as f64 * 2.0 * p * (1.0 - p)
}

/// Within-child sum of squared deviations (SSE criterion).
fn sse_part(sum: f64, sq: f64, n: usize) -> f64 {
    sq - sum * sum / n as f64
}

impl TreeModel {
    pub fn fit(features: &[Vec<f64>], labels: &[bool], hp: &Hyperparams) -> Self {
        let targets: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let mut nodes = Vec::new();
        build(
            &mut nodes,
            (0..features.len()).collect(),
            0,
            features,
            &targets,
            hp,
            &gini_part,
        );
        TreeModel { nodes }
    }

    /// Fraction of positive training examples in the reached leaf.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        walk(&self.nodes, x)
    }
}

impl RegressionTree {
    pub fn fit(features: &[Vec<f64>], targets: &[f64], hp: &Hyperparams) -> Self {
        let mut nodes = Vec::new();
        build(
            &mut nodes,
            (0..features.len()).collect(),
            0,
            features,
            targets,
            hp,
            &sse_part,
        );
        RegressionTree { nodes }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        walk(&self.nodes, x)
    }
}
