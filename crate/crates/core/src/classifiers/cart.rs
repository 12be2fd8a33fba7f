//! Binary classification tree grown by exhaustive Gini split search.
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values; zero-gain splits are allowed (an impurity plateau can still lead
//! to pure grandchildren), and ties prefer the lowest feature index and
//! threshold so the tree is deterministic.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::scores::ScoreVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CartNode {
    Leaf {
        /// Laplace-smoothed class frequencies; they sum to one.
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartModel {
    pub n_classes: usize,
    pub max_depth: usize,
    pub root: CartNode,
}

struct Builder<'a> {
    features: Vec<&'a [f64]>,
    labels: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    min_leaf: usize,
}

pub(super) fn fit(
    train: &Dataset,
    labels: &[usize],
    max_depth: usize,
    min_leaf: usize,
) -> CartModel {
    let builder = Builder {
        features: train.iter().map(|i| i.features.as_slice()).collect(),
        labels,
        n_classes: train.n_classes(),
        max_depth,
        min_leaf,
    };
    let members: Vec<usize> = (0..train.len()).collect();
    let root = builder.grow(&members, 0);
    CartModel {
        n_classes: train.n_classes(),
        max_depth,
        root,
    }
}

impl Builder<'_> {
    fn class_counts(&self, members: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in members {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn leaf(&self, members: &[usize]) -> CartNode {
        let counts = self.class_counts(members);
        let denom = (members.len() + self.n_classes) as f64;
        CartNode::Leaf {
            probs: counts.iter().map(|&c| (c + 1) as f64 / denom).collect(),
        }
    }

    fn gini(counts: &[usize], total: usize) -> f64 {
        if total == 0 {
            return 0.0;
        }
        let t = total as f64;
        1.0 - counts
            .iter()
            .map(|&c| {
                let p = c as f64 / t;
                p * p
            })
            .sum::<f64>()
    }

    fn grow(&self, members: &[usize], depth: usize) -> CartNode {
        let counts = self.class_counts(members);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || pure || members.len() < 2 * self.min_leaf {
            return self.leaf(members);
        }

        let mut best: Option<(f64, usize, f64)> = None; // (weighted impurity, feature, threshold)
        let dim = self.features[0].len();
        for feature in 0..dim {
            let mut sorted: Vec<usize> = members.to_vec();
            sorted.sort_by(|&a, &b| {
                self.features[a][feature]
                    .total_cmp(&self.features[b][feature])
                    .then(a.cmp(&b))
            });
            let mut left_counts = vec![0usize; self.n_classes];
            let mut right_counts = self.class_counts(members);
            for cut in 1..sorted.len() {
                let moved = sorted[cut - 1];
                left_counts[self.labels[moved]] += 1;
                right_counts[self.labels[moved]] -= 1;
                let prev = self.features[sorted[cut - 1]][feature];
                let next = self.features[sorted[cut]][feature];
                if prev == next {
                    continue;
                }
                if cut < self.min_leaf || sorted.len() - cut < self.min_leaf {
                    continue;
                }
                let threshold = prev + (next - prev) / 2.0;
                let weighted = (cut as f64 * Self::gini(&left_counts, cut)
                    + (sorted.len() - cut) as f64
                        * Self::gini(&right_counts, sorted.len() - cut))
                    / sorted.len() as f64;
                if best.is_none_or(|(w, _, _)| weighted < w) {
                    best = Some((weighted, feature, threshold));
                }
            }
        }

        match best {
            None => self.leaf(members),
            Some((_, feature, threshold)) => {
                let (left, right): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| self.features[i][feature] <= threshold);
                CartNode::Split {
                    feature,
                    threshold,
                    left: Box::new(self.grow(&left, depth + 1)),
                    right: Box::new(self.grow(&right, depth + 1)),
                }
            }
        }
    }
}

impl CartModel {
    pub(super) fn predict(&self, features: &[f64]) -> ScoreVector {
        let mut node = &self.root;
        loop {
            match node {
                CartNode::Leaf { probs } => return ScoreVector::from_raw(probs.clone()),
                CartNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn depth_of(node: &CartNode) -> usize {
            match node {
                CartNode::Leaf { .. } => 0,
                CartNode::Split { left, right, .. } => 1 + depth_of(left).max(depth_of(right)),
            }
        }
        depth_of(&self.root)
    }
}
