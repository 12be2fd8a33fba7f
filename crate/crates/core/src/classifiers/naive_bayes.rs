//! Gaussian naive Bayes: per-class feature means and variances with a
//! variance floor, scored through log-space posteriors.

use serde::{Deserialize, Serialize};

use super::{softmax, ModelError, NB_VARIANCE_FLOOR};
use crate::data::Dataset;
use crate::scores::ScoreVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_priors: Vec<f64>,
}

pub(super) fn fit(
    train: &Dataset,
    labels: &[usize],
    counts: &[usize],
) -> Result<NaiveBayesModel, ModelError> {
    let n_classes = train.n_classes();
    let dim = train.dim();
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(ModelError::EmptyClass(class));
    }

    let mut means = vec![vec![0.0; dim]; n_classes];
    for (inst, &label) in train.iter().zip(labels) {
        for (m, &f) in means[label].iter_mut().zip(&inst.features) {
            *m += f;
        }
    }
    for (class, mean) in means.iter_mut().enumerate() {
        for m in mean.iter_mut() {
            *m /= counts[class] as f64;
        }
    }

    let mut variances = vec![vec![0.0; dim]; n_classes];
    for (inst, &label) in train.iter().zip(labels) {
        for ((v, &f), &m) in variances[label]
            .iter_mut()
            .zip(&inst.features)
            .zip(&means[label])
        {
            *v += (f - m) * (f - m);
        }
    }
    for (class, variance) in variances.iter_mut().enumerate() {
        for v in variance.iter_mut() {
            *v = (*v / counts[class] as f64).max(NB_VARIANCE_FLOOR);
        }
    }

    let n = train.len() as f64;
    let log_priors = counts.iter().map(|&c| (c as f64 / n).ln()).collect();

    Ok(NaiveBayesModel {
        means,
        variances,
        log_priors,
    })
}

impl NaiveBayesModel {
    pub(super) fn predict(&self, features: &[f64]) -> ScoreVector {
        let log_posteriors: Vec<f64> = self
            .log_priors
            .iter()
            .enumerate()
            .map(|(class, &prior)| {
                let mut lp = prior;
                for ((&f, &m), &v) in features
                    .iter()
                    .zip(&self.means[class])
                    .zip(&self.variances[class])
                {
                    lp += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (f - m) * (f - m) / v);
                }
                lp
            })
            .collect();
        ScoreVector::from_raw(softmax(&log_posteriors))
    }
}
