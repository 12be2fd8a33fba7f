//! Per-class score vectors, the currency between classifiers, calibration
//! maps, and metrics.
//!
//! Every score vector lives on the probability simplex: components are
//! finite, within `[0, 1]`, and sum to one. Classifier outputs are mapped
//! onto the simplex before any calibration is applied, so downstream code
//! never has to reason about raw decision values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the simplex sum invariant.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("score vector must not be empty")]
    Empty,
    #[error("score component {index} is {value}, expected a finite value in [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("score components sum to {sum}, expected 1 within {SIMPLEX_TOLERANCE}")]
    NotNormalized { sum: f64 },
    #[error("score vector has {got} classes, expected {expected}")]
    ClassCountMismatch { expected: usize, got: usize },
}

/// Normalized per-class scores for a single instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    /// Validates the simplex invariant and wraps the components.
    pub fn new(scores: Vec<f64>) -> Result<Self, ScoreError> {
        if scores.is_empty() {
            return Err(ScoreError::Empty);
        }
        for (index, &value) in scores.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(ScoreError::OutOfRange { index, value });
            }
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(ScoreError::NotNormalized { sum });
        }
        Ok(Self(scores))
    }

    /// Projects raw non-negative values onto the simplex.
    ///
    /// Negative or non-finite components clamp to zero. An all-zero input
    /// becomes the uniform vector, so callers always get a valid result.
    pub fn from_raw(raw: Vec<f64>) -> Self {
        assert!(!raw.is_empty(), "score vector must not be empty");
        let n = raw.len();
        let mut clamped: Vec<f64> = raw
            .into_iter()
            .map(|v| if v.is_finite() && v > 0.0 { v } else { 0.0 })
            .collect();
        let sum: f64 = clamped.iter().sum();
        if sum <= f64::MIN_POSITIVE {
            return Self(vec![1.0 / n as f64; n]);
        }
        for v in &mut clamped {
            *v /= sum;
        }
        // Guard against rounding pushing a component over 1.0.
        for v in &mut clamped {
            *v = v.min(1.0);
        }
        Self(clamped)
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn score(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Argmax class, ties broken toward the lowest class index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Highest per-class score: the model's confidence in its prediction.
    pub fn max_score(&self) -> f64 {
        self.0[self.predicted_class()]
    }
}

/// One [`ScoreVector`] per instance, all with the same class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    n_classes: usize,
    rows: Vec<ScoreVector>,
}

impl ScoreMatrix {
    pub fn new(n_classes: usize, rows: Vec<ScoreVector>) -> Result<Self, ScoreError> {
        for row in &rows {
            if row.n_classes() != n_classes {
                return Err(ScoreError::ClassCountMismatch {
                    expected: n_classes,
                    got: row.n_classes(),
                });
            }
        }
        Ok(Self { n_classes, rows })
    }

    pub fn empty(n_classes: usize) -> Self {
        Self {
            n_classes,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ScoreVector) -> Result<(), ScoreError> {
        if row.n_classes() != self.n_classes {
            return Err(ScoreError::ClassCountMismatch {
                expected: self.n_classes,
                got: row.n_classes(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn rows(&self) -> &[ScoreVector] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> &ScoreVector {
        &self.rows[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoreVector> {
        self.rows.iter()
    }

    /// Extracts the scores of one class across all instances.
    pub fn column(&self, class: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.score(class)).collect()
    }
}
