//! Five lightweight multiclass classifiers behind one interface. Every
//! family produces normalized [`ScoreVector`]s so the calibration layer
//! never sees raw decision values.

mod cart;
mod knn;
mod linear;
mod mlp;
mod naive_bayes;

pub use cart::CartModel;
pub use knn::KnnModel;
pub use linear::LinearModel;
pub use mlp::MlpModel;
pub use naive_bayes::NaiveBayesModel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, RngSeed};
use crate::scores::{ScoreMatrix, ScoreVector};

/// Current persisted-model format.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Variance floor for Gaussian naive Bayes, guarding single-sample classes
/// and constant features.
pub const NB_VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("train set is empty")]
    EmptyTrainSet,
    #[error("class {0} has no training instances")]
    EmptyClass(usize),
    #[error("instance has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("instance {id} is unlabeled")]
    UnlabeledInstance { id: u64 },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

/// Classifier family and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    GaussianNb,
    Knn {
        /// Neighbor count; odd by default to reduce voting ties.
        k: usize,
    },
    Cart {
        max_depth: usize,
        min_leaf: usize,
    },
    /// One-vs-rest linear model trained with hinge loss by seeded
    /// stochastic subgradient descent; scores are the softmax of the
    /// per-class decision values.
    Linear {
        epochs: usize,
        learning_rate: f64,
        regularization: f64,
    },
    /// Single hidden layer, tanh activation, full-batch gradient descent.
    Mlp {
        hidden_width: usize,
        epochs: usize,
        learning_rate: f64,
    },
}

impl ModelFamily {
    pub fn gaussian_nb() -> Self {
        ModelFamily::GaussianNb
    }

    pub fn knn() -> Self {
        ModelFamily::Knn { k: 5 }
    }

    pub fn cart() -> Self {
        ModelFamily::Cart {
            max_depth: 8,
            min_leaf: 1,
        }
    }

    pub fn linear() -> Self {
        ModelFamily::Linear {
            epochs: 50,
            learning_rate: 0.1,
            regularization: 1e-4,
        }
    }

    pub fn mlp() -> Self {
        ModelFamily::Mlp {
            hidden_width: 32,
            epochs: 200,
            learning_rate: 0.05,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::GaussianNb => "nb",
            ModelFamily::Knn { .. } => "knn",
            ModelFamily::Cart { .. } => "cart",
            ModelFamily::Linear { .. } => "linear",
            ModelFamily::Mlp { .. } => "mlp",
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidHyperparameter(msg.to_string()));
        match *self {
            ModelFamily::GaussianNb => Ok(()),
            ModelFamily::Knn { k } => {
                if k == 0 {
                    bad("knn k must be positive")
                } else {
                    Ok(())
                }
            }
            ModelFamily::Cart {
                max_depth,
                min_leaf,
            } => {
                if max_depth == 0 || min_leaf == 0 {
                    bad("cart max_depth and min_leaf must be positive")
                } else {
                    Ok(())
                }
            }
            ModelFamily::Linear {
                epochs,
                learning_rate,
                regularization,
            } => {
                if epochs == 0 || learning_rate <= 0.0 || regularization < 0.0 {
                    bad("linear epochs/learning_rate must be positive")
                } else {
                    Ok(())
                }
            }
            ModelFamily::Mlp {
                hidden_width,
                epochs,
                learning_rate,
            } => {
                if hidden_width == 0 || epochs == 0 || learning_rate <= 0.0 {
                    bad("mlp hyperparameters must be positive")
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// A family plus the seed that drives any randomness in its training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub seed: RngSeed,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, seed: RngSeed) -> Self {
        Self { family, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayes(NaiveBayesModel),
    Knn(KnnModel),
    Cart(CartModel),
    Linear(LinearModel),
    Mlp(MlpModel),
}

/// A fitted classifier. Immutable after [`fit`]; prediction is read-only
/// and safe to run in parallel across instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub n_classes: usize,
    pub dim: usize,
    /// Set when the training data was degenerate (for example every
    /// feature constant); the fit still completes.
    pub degenerate_data: bool,
    pub params: ModelParams,
}

impl TrainedModel {
    /// Scores a single feature vector.
    pub fn predict_one(&self, features: &[f64]) -> Result<ScoreVector, ModelError> {
        if features.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                got: features.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::NaiveBayes(m) => m.predict(features),
            ModelParams::Knn(m) => m.predict(features),
            ModelParams::Cart(m) => m.predict(features),
            ModelParams::Linear(m) => m.predict(features),
            ModelParams::Mlp(m) => m.predict(features),
        })
    }

    /// Scores every instance of a dataset, one row per instance.
    pub fn predict_scores(&self, instances: &Dataset) -> Result<ScoreMatrix, ModelError> {
        let mut matrix = ScoreMatrix::empty(self.n_classes);
        for inst in instances.iter() {
            let row = self.predict_one(&inst.features)?;
            matrix.push(row).expect("predict_one yields n_classes scores");
        }
        Ok(matrix)
    }
}

fn labels_and_counts(train: &Dataset) -> Result<(Vec<usize>, Vec<usize>), ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    let mut labels = Vec::with_capacity(train.len());
    let mut counts = vec![0usize; train.n_classes()];
    for inst in train.iter() {
        let label = inst
            .label
            .ok_or(ModelError::UnlabeledInstance { id: inst.id })?;
        labels.push(label);
        counts[label] += 1;
    }
    Ok((labels, counts))
}

fn all_features_constant(train: &Dataset) -> bool {
    let dim = train.dim();
    (0..dim).all(|j| {
        let first = train.instances()[0].features[j];
        train.iter().all(|i| i.features[j] == first)
    })
}

/// Trains a model of the requested family. Deterministic per seed.
pub fn fit(spec: &ModelSpec, train: &Dataset) -> Result<TrainedModel, ModelError> {
    spec.family.validate()?;
    let (labels, counts) = labels_and_counts(train)?;
    let n_classes = train.n_classes();
    let dim = train.dim();

    let mut degenerate_data = false;
    let params = match spec.family {
        ModelFamily::GaussianNb => {
            ModelParams::NaiveBayes(naive_bayes::fit(train, &labels, &counts)?)
        }
        ModelFamily::Knn { k } => ModelParams::Knn(knn::fit(train, &labels, k)),
        ModelFamily::Cart {
            max_depth,
            min_leaf,
        } => ModelParams::Cart(cart::fit(train, &labels, max_depth, min_leaf)),
        ModelFamily::Linear {
            epochs,
            learning_rate,
            regularization,
        } => {
            degenerate_data = all_features_constant(train);
            ModelParams::Linear(linear::fit(
                train,
                &labels,
                epochs,
                learning_rate,
                regularization,
                spec.seed,
            ))
        }
        ModelFamily::Mlp {
            hidden_width,
            epochs,
            learning_rate,
        } => {
            degenerate_data = all_features_constant(train);
            ModelParams::Mlp(mlp::fit(
                train,
                &labels,
                hidden_width,
                epochs,
                learning_rate,
                spec.seed,
            ))
        }
    };

    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        n_classes,
        dim,
        degenerate_data,
        params,
    })
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;

    fn dataset(points: &[(Vec<f64>, usize)], n_classes: usize) -> Dataset {
        let instances = points
            .iter()
            .enumerate()
            .map(|(i, (f, l))| Instance::new(i as u64, f.clone(), Some(*l)))
            .collect();
        Dataset::new(instances, n_classes).unwrap()
    }

    fn two_gaussians(seed: u64, n: usize) -> Dataset {
        use rand::Rng;
        let mut rng = RngSeed(seed).rng();
        let points: Vec<(Vec<f64>, usize)> = (0..n)
            .map(|i| {
                let label = i % 2;
                let center = if label == 0 { -2.0 } else { 2.0 };
                (vec![center + rng.random::<f64>() - 0.5], label)
            })
            .collect();
        dataset(&points, 2)
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let ds = two_gaussians(3, 60);
        for family in [
            ModelFamily::gaussian_nb(),
            ModelFamily::knn(),
            ModelFamily::cart(),
            ModelFamily::linear(),
            ModelFamily::mlp(),
        ] {
            let spec = ModelSpec::new(family, RngSeed(11));
            let a = fit(&spec, &ds).unwrap();
            let b = fit(&spec, &ds).unwrap();
            assert_eq!(a, b, "family {} not deterministic", spec.family.name());
        }
    }

    #[test]
    fn scores_live_on_simplex() {
        let ds = two_gaussians(9, 40);
        for family in [
            ModelFamily::gaussian_nb(),
            ModelFamily::knn(),
            ModelFamily::cart(),
            ModelFamily::linear(),
            ModelFamily::mlp(),
        ] {
            let model = fit(&ModelSpec::new(family, RngSeed(4)), &ds).unwrap();
            let scores = model.predict_scores(&ds).unwrap();
            for row in scores.iter() {
                let sum: f64 = row.scores().iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(row.scores().iter().all(|&s| (0.0..=1.0).contains(&s)));
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let ds = two_gaussians(1, 20);
        let model = fit(&ModelSpec::new(ModelFamily::knn(), RngSeed(0)), &ds).unwrap();
        assert!(matches!(
            model.predict_one(&[0.0, 1.0]),
            Err(ModelError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn degenerate_data_flagged_for_linear_and_mlp() {
        let points: Vec<(Vec<f64>, usize)> =
            (0..10).map(|i| (vec![1.0, 1.0], i % 2)).collect();
        let ds = dataset(&points, 2);
        for family in [ModelFamily::linear(), ModelFamily::mlp()] {
            let model = fit(&ModelSpec::new(family, RngSeed(2)), &ds).unwrap();
            assert!(model.degenerate_data);
        }
        let model = fit(&ModelSpec::new(ModelFamily::knn(), RngSeed(2)), &ds).unwrap();
        assert!(!model.degenerate_data);
    }

    #[test]
    fn permutation_equivariance_nb_and_knn() {
        // Relabeling classes through a permutation must permute the score
        // components identically.
        let ds = {
            use rand::Rng;
            let mut rng = RngSeed(31).rng();
            let points: Vec<(Vec<f64>, usize)> = (0..90)
                .map(|i| {
                    let label = i % 3;
                    let center = label as f64 * 3.0;
                    (
                        vec![center + rng.random::<f64>(), rng.random::<f64>()],
                        label,
                    )
                })
                .collect();
            dataset(&points, 3)
        };
        let perm = [2usize, 0, 1];
        let permuted = {
            let instances = ds
                .iter()
                .map(|inst| {
                    Instance::new(inst.id, inst.features.clone(), inst.label.map(|l| perm[l]))
                })
                .collect();
            Dataset::new(instances, 3).unwrap()
        };
        for family in [ModelFamily::gaussian_nb(), ModelFamily::knn()] {
            let base = fit(&ModelSpec::new(family.clone(), RngSeed(8)), &ds).unwrap();
            let moved = fit(&ModelSpec::new(family, RngSeed(8)), &permuted).unwrap();
            let probe = vec![1.4, 0.3];
            let s1 = base.predict_one(&probe).unwrap();
            let s2 = moved.predict_one(&probe).unwrap();
            for (c, &moved) in perm.iter().enumerate() {
                assert!((s1.score(c) - s2.score(moved)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn model_serde_round_trip() {
        let ds = two_gaussians(5, 30);
        let model = fit(&ModelSpec::new(ModelFamily::mlp(), RngSeed(77)), &ds).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: TrainedModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        assert_eq!(back.format_version, MODEL_FORMAT_VERSION);
    }
}
