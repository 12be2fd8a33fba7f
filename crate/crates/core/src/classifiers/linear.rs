//! One-vs-rest linear classifier trained with hinge loss by seeded
//! stochastic subgradient descent. Scores are the softmax of the per-class
//! decision values, which keeps the output on the simplex for the
//! calibration layer.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::softmax;
use crate::data::{Dataset, RngSeed};
use crate::scores::ScoreVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// One weight row per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

pub(super) fn fit(
    train: &Dataset,
    labels: &[usize],
    epochs: usize,
    learning_rate: f64,
    regularization: f64,
    seed: RngSeed,
) -> LinearModel {
    let n_classes = train.n_classes();
    let dim = train.dim();
    let mut weights = vec![vec![0.0; dim]; n_classes];
    let mut biases = vec![0.0; n_classes];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = seed.rng();

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let step = learning_rate / (1.0 + epoch as f64 * 0.1);
        for &i in &order {
            let features = &train.instances()[i].features;
            for class in 0..n_classes {
                let target = if labels[i] == class { 1.0 } else { -1.0 };
                let decision: f64 = weights[class]
                    .iter()
                    .zip(features)
                    .map(|(w, f)| w * f)
                    .sum::<f64>()
                    + biases[class];
                let margin = target * decision;
                for (w, &f) in weights[class].iter_mut().zip(features) {
                    let hinge_grad = if margin < 1.0 { -target * f } else { 0.0 };
                    *w -= step * (hinge_grad + regularization * *w);
                }
                if margin < 1.0 {
                    biases[class] += step * target;
                }
            }
        }
    }

    LinearModel { weights, biases }
}

impl LinearModel {
    pub(super) fn predict(&self, features: &[f64]) -> ScoreVector {
        let decisions: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(features).map(|(wi, fi)| wi * fi).sum::<f64>() + b)
            .collect();
        ScoreVector::from_raw(softmax(&decisions))
    }
}
