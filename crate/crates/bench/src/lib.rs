//! Shared fixtures for the criterion benches.

use rand::Rng;

use probcal::data::RngSeed;
use probcal::scores::{ScoreMatrix, ScoreVector};

/// Deterministic uniform draws for the sketch and metric benches.
pub fn uniform_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngSeed(seed).rng();
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// A random simplex-valued score matrix.
pub fn random_scores(n: usize, classes: usize, seed: u64) -> ScoreMatrix {
    let mut rng = RngSeed(seed).rng();
    let rows = (0..n)
        .map(|_| ScoreVector::from_raw((0..classes).map(|_| rng.random::<f64>()).collect()))
        .collect();
    ScoreMatrix::new(classes, rows).expect("rows built with the requested class count")
}
