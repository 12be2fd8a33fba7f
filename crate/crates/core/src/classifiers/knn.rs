//! k-nearest neighbors with Laplace-smoothed neighbor proportions, so no
//! class ever scores an exact zero or one.

use serde::{Deserialize, Serialize};

use super::squared_distance;
use crate::data::Dataset;
use crate::scores::ScoreVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub(super) fn fit(train: &Dataset, labels: &[usize], k: usize) -> KnnModel {
    KnnModel {
        k,
        n_classes: train.n_classes(),
        features: train.iter().map(|i| i.features.clone()).collect(),
        labels: labels.to_vec(),
    }
}

impl KnnModel {
    pub(super) fn predict(&self, features: &[f64]) -> ScoreVector {
        let k = self.k.min(self.features.len());
        // Ties on distance break by training order for determinism.
        let mut order: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (squared_distance(features, f), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut counts = vec![0usize; self.n_classes];
        for &(_, idx) in order.iter().take(k) {
            counts[self.labels[idx]] += 1;
        }
        let denom = (k + self.n_classes) as f64;
        let scores = counts
            .into_iter()
            .map(|c| (c + 1) as f64 / denom)
            .collect();
        ScoreVector::from_raw(scores)
    }
}
