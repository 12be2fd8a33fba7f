//! Single-hidden-layer perceptron: tanh activation, softmax output,
//! cross-entropy loss, full-batch gradient descent with seeded Xavier
//! initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::softmax;
use crate::data::{Dataset, RngSeed};
use crate::scores::ScoreVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub hidden_weights: Vec<Vec<f64>>, // hidden x dim
    pub hidden_biases: Vec<f64>,
    pub output_weights: Vec<Vec<f64>>, // classes x hidden
    pub output_biases: Vec<f64>,
    /// Mean train cross-entropy after each epoch.
    pub loss_history: Vec<f64>,
}

pub(super) fn fit(
    train: &Dataset,
    labels: &[usize],
    hidden_width: usize,
    epochs: usize,
    learning_rate: f64,
    seed: RngSeed,
) -> MlpModel {
    let n_classes = train.n_classes();
    let dim = train.dim();
    let n = train.len();
    let mut rng = seed.rng();

    let xavier = |fan_in: usize, fan_out: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        rng.random_range(-bound..bound)
    };
    let mut hidden_weights: Vec<Vec<f64>> = (0..hidden_width)
        .map(|_| (0..dim).map(|_| xavier(dim, hidden_width, &mut rng)).collect())
        .collect();
    let mut hidden_biases = vec![0.0; hidden_width];
    let mut output_weights: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            (0..hidden_width)
                .map(|_| xavier(hidden_width, n_classes, &mut rng))
                .collect()
        })
        .collect();
    let mut output_biases = vec![0.0; n_classes];
    let mut loss_history = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        let mut grad_hw = vec![vec![0.0; dim]; hidden_width];
        let mut grad_hb = vec![0.0; hidden_width];
        let mut grad_ow = vec![vec![0.0; hidden_width]; n_classes];
        let mut grad_ob = vec![0.0; n_classes];
        let mut loss = 0.0;

        for (inst, &label) in train.iter().zip(labels) {
            let x = &inst.features;
            let hidden: Vec<f64> = hidden_weights
                .iter()
                .zip(&hidden_biases)
                .map(|(w, b)| {
                    (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b).tanh()
                })
                .collect();
            let logits: Vec<f64> = output_weights
                .iter()
                .zip(&output_biases)
                .map(|(w, b)| w.iter().zip(&hidden).map(|(wi, hi)| wi * hi).sum::<f64>() + b)
                .collect();
            let probs = softmax(&logits);
            loss -= probs[label].max(1e-300).ln();

            // dL/dlogit = p - onehot
            let delta_out: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(c, &p)| p - f64::from(c == label))
                .collect();
            for (c, &d) in delta_out.iter().enumerate() {
                for (g, &h) in grad_ow[c].iter_mut().zip(&hidden) {
                    *g += d * h;
                }
                grad_ob[c] += d;
            }
            for h in 0..hidden_width {
                let upstream: f64 = delta_out
                    .iter()
                    .enumerate()
                    .map(|(c, &d)| d * output_weights[c][h])
                    .sum();
                let delta_h = upstream * (1.0 - hidden[h] * hidden[h]);
                for (g, &xi) in grad_hw[h].iter_mut().zip(x) {
                    *g += delta_h * xi;
                }
                grad_hb[h] += delta_h;
            }
        }

        let scale = learning_rate / n as f64;
        for (w_row, g_row) in hidden_weights.iter_mut().zip(&grad_hw) {
            for (w, g) in w_row.iter_mut().zip(g_row) {
                *w -= scale * g;
            }
        }
        for (b, g) in hidden_biases.iter_mut().zip(&grad_hb) {
            *b -= scale * g;
        }
        for (w_row, g_row) in output_weights.iter_mut().zip(&grad_ow) {
            for (w, g) in w_row.iter_mut().zip(g_row) {
                *w -= scale * g;
            }
        }
        for (b, g) in output_biases.iter_mut().zip(&grad_ob) {
            *b -= scale * g;
        }
        loss_history.push(loss / n as f64);
    }

    MlpModel {
        hidden_weights,
        hidden_biases,
        output_weights,
        output_biases,
        loss_history,
    }
}

impl MlpModel {
    pub(super) fn predict(&self, features: &[f64]) -> ScoreVector {
        let hidden: Vec<f64> = self
            .hidden_weights
            .iter()
            .zip(&self.hidden_biases)
            .map(|(w, b)| {
                (w.iter().zip(features).map(|(wi, xi)| wi * xi).sum::<f64>() + b).tanh()
            })
            .collect();
        let logits: Vec<f64> = self
            .output_weights
            .iter()
            .zip(&self.output_biases)
            .map(|(w, b)| w.iter().zip(&hidden).map(|(wi, hi)| wi * hi).sum::<f64>() + b)
            .collect();
        ScoreVector::from_raw(softmax(&logits))
    }
}

#[cfg(test)]
mod tests {
    use crate::classifiers::{fit, ModelFamily, ModelParams, ModelSpec};
    use crate::data::{Dataset, Instance, RngSeed};

    fn blobs() -> Dataset {
        use rand::Rng;
        let mut rng = RngSeed(6).rng();
        let instances: Vec<Instance> = (0..90)
            .map(|i| {
                let label = i % 3;
                let center = [(0.0, 0.0), (2.0, 2.0), (-2.0, 2.0)][label];
                Instance::new(
                    i as u64,
                    vec![
                        center.0 + 0.3 * rng.random::<f64>(),
                        center.1 + 0.3 * rng.random::<f64>(),
                    ],
                    Some(label),
                )
            })
            .collect();
        Dataset::new(instances, 3).unwrap()
    }

    #[test]
    fn loss_non_increasing_with_small_learning_rate() {
        let ds = blobs();
        let spec = ModelSpec::new(
            ModelFamily::Mlp {
                hidden_width: 16,
                epochs: 120,
                learning_rate: 0.01,
            },
            RngSeed(44),
        );
        let model = fit(&spec, &ds).unwrap();
        let ModelParams::Mlp(mlp) = &model.params else {
            panic!("wrong family")
        };
        for pair in mlp.loss_history.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-6,
                "loss increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn learns_separated_blobs() {
        let ds = blobs();
        let model = fit(&ModelSpec::new(ModelFamily::mlp(), RngSeed(3)), &ds).unwrap();
        let correct = ds
            .iter()
            .filter(|inst| {
                model
                    .predict_one(&inst.features)
                    .unwrap()
                    .predicted_class()
                    == inst.label.unwrap()
            })
            .count();
        assert!(correct >= 85, "train accuracy {correct}/90");
    }
}
