//! Online quantile sketch over unbounded value streams.
//!
//! This is a merging digest: incoming points accumulate in a buffer and are
//! periodically merged into a bounded list of weighted centroids. Cluster
//! sizes are governed by the asymmetric scale function
//! `k(q) = compression * (asin(2q - 1) / pi + 1/2)`, which keeps the tails
//! sharp while allowing wide clusters near the median. The calibration
//! layer queries it for quantiles, CDF values, and fixed-width bin masses.

use std::borrow::Cow;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default compression (`delta`). Roughly bounds the centroid count at
/// twice this value.
pub const DEFAULT_COMPRESSION: f64 = 100.0;

/// Buffered points per compression pass, as a multiple of the compression.
const BUFFER_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DigestError {
    #[error("cannot add non-finite value {0}")]
    NonFiniteValue(f64),
    #[error("weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("digest is empty")]
    EmptyDigest,
    #[error("quantile {0} outside [0, 1]")]
    QOutOfRange(f64),
    #[error("invalid bin range [{lo}, {hi})")]
    InvalidRange { lo: f64, hi: f64 },
}

/// A cluster of nearby points, summarized by its weighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub mean: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TDigest {
    compression: f64,
    centroids: Vec<Centroid>,
    buffer: Vec<Centroid>,
    total_weight: f64,
    min: f64,
    max: f64,
}

impl Default for TDigest {
    fn default() -> Self {
        Self::new(DEFAULT_COMPRESSION)
    }
}

impl TDigest {
    pub fn new(compression: f64) -> Self {
        let compression = if compression.is_finite() && compression >= 10.0 {
            compression
        } else {
            DEFAULT_COMPRESSION
        };
        Self {
            compression,
            centroids: Vec::new(),
            buffer: Vec::new(),
            total_weight: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn compression(&self) -> f64 {
        self.compression
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn is_empty(&self) -> bool {
        self.total_weight == 0.0
    }

    /// Smallest value ever inserted; NaN while empty.
    pub fn min(&self) -> f64 {
        if self.is_empty() {
            f64::NAN
        } else {
            self.min
        }
    }

    pub fn max(&self) -> f64 {
        if self.is_empty() {
            f64::NAN
        } else {
            self.max
        }
    }

    /// Number of merged centroids (buffer not included).
    pub fn centroid_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn add(&mut self, value: f64, weight: f64) -> Result<(), DigestError> {
        if !value.is_finite() {
            return Err(DigestError::NonFiniteValue(value));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(DigestError::NonPositiveWeight(weight));
        }
        self.buffer.push(Centroid {
            mean: value,
            weight,
        });
        self.total_weight += weight;
        self.min = self.min.min(value);
        self.max = self.max.max(value);
        if self.buffer.len() >= (BUFFER_FACTOR * self.compression) as usize {
            self.flush();
        }
        Ok(())
    }

    /// Merges buffered points into the centroid list.
    pub fn flush(&mut self) {
        if self.buffer.is_empty() {
            return;
        }
        let mut all = std::mem::take(&mut self.centroids);
        all.append(&mut self.buffer);
        self.centroids = compress(all, self.compression, self.total_weight);
    }

    /// Combines two digests; the result carries the larger compression and
    /// the exact sum of both weights.
    pub fn merge(&self, other: &TDigest) -> TDigest {
        let compression = self.compression.max(other.compression);
        let mut all: Vec<Centroid> = Vec::with_capacity(
            self.centroids.len() + self.buffer.len() + other.centroids.len() + other.buffer.len(),
        );
        all.extend_from_slice(&self.centroids);
        all.extend_from_slice(&self.buffer);
        all.extend_from_slice(&other.centroids);
        all.extend_from_slice(&other.buffer);
        let total_weight = self.total_weight + other.total_weight;
        let centroids = compress(all, compression, total_weight);
        TDigest {
            compression,
            centroids,
            buffer: Vec::new(),
            total_weight,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    fn view(&self) -> Cow<'_, [Centroid]> {
        if self.buffer.is_empty() {
            Cow::Borrowed(&self.centroids)
        } else {
            let mut all = self.centroids.clone();
            all.extend_from_slice(&self.buffer);
            Cow::Owned(compress(all, self.compression, self.total_weight))
        }
    }

    /// Rank anchors for interpolation: the exact min at rank 0, each
    /// centroid mean at its cumulative mid-rank, and the exact max at the
    /// full weight.
    fn anchors(centroids: &[Centroid], min: f64, max: f64, total: f64) -> Vec<(f64, f64)> {
        let mut anchors = Vec::with_capacity(centroids.len() + 2);
        anchors.push((min, 0.0));
        let mut before = 0.0;
        for c in centroids {
            anchors.push((c.mean.clamp(min, max), before + c.weight / 2.0));
            before += c.weight;
        }
        anchors.push((max, total));
        anchors
    }

    /// Value at quantile `q`; exact at the extremes, interpolated between
    /// adjacent centroid mid-ranks elsewhere.
    pub fn quantile(&self, q: f64) -> Result<f64, DigestError> {
        if !(0.0..=1.0).contains(&q) || q.is_nan() {
            return Err(DigestError::QOutOfRange(q));
        }
        if self.is_empty() {
            return Err(DigestError::EmptyDigest);
        }
        if q == 0.0 {
            return Ok(self.min);
        }
        if q == 1.0 {
            return Ok(self.max);
        }
        let view = self.view();
        let anchors = Self::anchors(&view, self.min, self.max, self.total_weight);
        let target = q * self.total_weight;
        for pair in anchors.windows(2) {
            let (x0, r0) = pair[0];
            let (x1, r1) = pair[1];
            if target <= r1 {
                if r1 <= r0 {
                    return Ok(x1);
                }
                let t = (target - r0) / (r1 - r0);
                return Ok((x0 + t * (x1 - x0)).clamp(self.min, self.max));
            }
        }
        Ok(self.max)
    }

    /// Fraction of the total weight at or below `x`.
    pub fn cdf(&self, x: f64) -> Result<f64, DigestError> {
        if self.is_empty() {
            return Err(DigestError::EmptyDigest);
        }
        if self.min == self.max {
            return Ok(if x < self.min { 0.0 } else { 1.0 });
        }
        if x < self.min {
            return Ok(0.0);
        }
        if x >= self.max {
            return Ok(1.0);
        }
        let view = self.view();
        let anchors = Self::anchors(&view, self.min, self.max, self.total_weight);
        for pair in anchors.windows(2) {
            let (x0, r0) = pair[0];
            let (x1, r1) = pair[1];
            if x < x1 {
                if x1 <= x0 {
                    return Ok((r1 / self.total_weight).clamp(0.0, 1.0));
                }
                let t = (x - x0) / (x1 - x0);
                let rank = r0 + t * (r1 - r0);
                return Ok((rank / self.total_weight).clamp(0.0, 1.0));
            }
        }
        Ok(1.0)
    }

    /// Estimated weight inside `[lo, hi)`. Over a fixed-width partition of
    /// the value range the masses telescope back to the total weight; a
    /// degenerate digest (all mass at one point) counts its atom in the
    /// half-open bin, or in the closing bin whose upper edge equals it.
    pub fn bin_mass(&self, lo: f64, hi: f64) -> Result<f64, DigestError> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(DigestError::InvalidRange { lo, hi });
        }
        if self.is_empty() {
            return Err(DigestError::EmptyDigest);
        }
        if self.min == self.max {
            let v = self.min;
            let inside = (v >= lo && v < hi) || (v == hi && v == self.max);
            return Ok(if inside { self.total_weight } else { 0.0 });
        }
        Ok(self.total_weight * (self.cdf(hi)? - self.cdf(lo)?).max(0.0))
    }
}

fn compress(mut all: Vec<Centroid>, compression: f64, total_weight: f64) -> Vec<Centroid> {
    if all.len() <= 1 {
        return all;
    }
    all.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    let k = |q: f64| compression * (((2.0 * q - 1.0).clamp(-1.0, 1.0)).asin() / PI + 0.5);
    let mut out: Vec<Centroid> = Vec::new();
    let mut iter = all.into_iter();
    let mut current = iter.next().unwrap();
    let mut weight_done = 0.0;
    for next in iter {
        let q0 = weight_done / total_weight;
        let q2 = (weight_done + current.weight + next.weight) / total_weight;
        if k(q2) - k(q0) <= 1.0 {
            let merged_weight = current.weight + next.weight;
            current.mean =
                (current.mean * current.weight + next.mean * next.weight) / merged_weight;
            current.weight = merged_weight;
        } else {
            weight_done += current.weight;
            out.push(current);
            current = next;
        }
    }
    out.push(current);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn digest_of(values: impl IntoIterator<Item = f64>) -> TDigest {
        let mut d = TDigest::default();
        for v in values {
            d.add(v, 1.0).unwrap();
        }
        d
    }

    #[test]
    fn single_point_quantile() {
        let d = digest_of([0.7]);
        assert_eq!(d.quantile(0.5).unwrap(), 0.7);
        assert_eq!(d.quantile(0.0).unwrap(), 0.7);
        assert_eq!(d.quantile(1.0).unwrap(), 0.7);
    }

    #[test]
    fn single_point_cdf() {
        let d = digest_of([0.7]);
        assert_eq!(d.cdf(0.6).unwrap(), 0.0);
        assert_eq!(d.cdf(0.8).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut d = TDigest::default();
        assert!(matches!(
            d.add(f64::NAN, 1.0),
            Err(DigestError::NonFiniteValue(_))
        ));
        assert!(matches!(
            d.add(0.5, 0.0),
            Err(DigestError::NonPositiveWeight(_))
        ));
        assert!(matches!(d.quantile(0.5), Err(DigestError::EmptyDigest)));
        d.add(0.5, 1.0).unwrap();
        assert!(matches!(d.quantile(1.5), Err(DigestError::QOutOfRange(_))));
    }

    #[test]
    fn centroid_count_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut d = TDigest::new(100.0);
        for _ in 0..10_000 {
            d.add(rng.random::<f64>(), 1.0).unwrap();
        }
        d.flush();
        assert!(
            d.centroid_count() <= 200,
            "centroid count {} exceeds 2x compression",
            d.centroid_count()
        );
    }

    #[test]
    fn quantile_of_integer_ramp() {
        let d = digest_of((1..=1000).map(|v| v as f64));
        let median = d.quantile(0.5).unwrap();
        assert!((495.0..=506.0).contains(&median), "median {median}");
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = digest_of((0..500).map(|_| rng.random::<f64>()));
        let merged = d.merge(&TDigest::default());
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            assert!((merged.quantile(q).unwrap() - d.quantile(q).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_halves_meets_at_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let lo = digest_of((0..5000).map(|_| rng.random::<f64>() * 0.5));
        let hi = digest_of((0..5000).map(|_| 0.5 + rng.random::<f64>() * 0.5));
        let merged = lo.merge(&hi);
        assert!((merged.cdf(0.5).unwrap() - 0.5).abs() < 0.02);
        assert!((merged.total_weight() - 10_000.0).abs() < 1e-9);
    }

    #[test]
    fn weight_conservation_under_add_and_merge() {
        let mut a = TDigest::new(50.0);
        let mut b = TDigest::new(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut expected = 0.0;
        for _ in 0..2000 {
            let w = 0.5 + rng.random::<f64>();
            a.add(rng.random::<f64>(), w).unwrap();
            expected += w;
        }
        for _ in 0..2000 {
            b.add(rng.random::<f64>(), 2.0).unwrap();
            expected += 2.0;
        }
        let merged = a.merge(&b);
        assert!((merged.total_weight() - expected).abs() < 1e-9);
        let from_centroids: f64 = merged.centroids().iter().map(|c| c.weight).sum();
        assert!((from_centroids - expected).abs() < 1e-6);
    }

    #[test]
    fn quantiles_monotone_in_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let d = digest_of((0..3000).map(|_| rng.random::<f64>().powi(2)));
        let mut last = f64::NEG_INFINITY;
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            let v = d.quantile(q).unwrap();
            assert!(v >= last, "quantile({q}) = {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn order_insensitive_within_rank_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut values: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let sorted_insert = digest_of(values.iter().copied());
        values.reverse();
        let reversed_insert = digest_of(values.iter().copied());
        let mut exact = values.clone();
        exact.sort_by(|a, b| a.total_cmp(b));
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let a = sorted_insert.quantile(q).unwrap();
            let b = reversed_insert.quantile(q).unwrap();
            let rank_a = exact.iter().filter(|&&v| v <= a).count() as f64 / exact.len() as f64;
            let rank_b = exact.iter().filter(|&&v| v <= b).count() as f64 / exact.len() as f64;
            assert!((rank_a - rank_b).abs() <= 0.01, "q={q}: {rank_a} vs {rank_b}");
        }
    }

    #[test]
    fn cdf_inverse_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let d = digest_of((0..10_000).map(|_| rng.random::<f64>()));
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let round_trip = d.cdf(d.quantile(q).unwrap()).unwrap();
            assert!((round_trip - q).abs() <= 0.02, "q={q} round trip {round_trip}");
        }
    }

    #[test]
    fn empirical_cdf_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let d = digest_of((0..10_000).map(|_| rng.random::<f64>()));
        assert!((d.cdf(0.3).unwrap() - 0.3).abs() < 0.02);
    }

    #[test]
    fn bin_masses_telescope() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let d = digest_of((0..5000).map(|_| 0.001 + 0.998 * rng.random::<f64>()));
        let total: f64 = (0..10)
            .map(|b| d.bin_mass(b as f64 / 10.0, (b + 1) as f64 / 10.0).unwrap())
            .sum();
        assert!((total - d.total_weight()).abs() < 1e-9);
    }

    #[test]
    fn point_mass_lands_in_its_bin() {
        let mut d = TDigest::default();
        for _ in 0..50 {
            d.add(0.05, 1.0).unwrap();
        }
        assert_eq!(d.bin_mass(0.0, 0.1).unwrap(), 50.0);
        assert_eq!(d.bin_mass(0.1, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn uniform_bins_are_even() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let d = digest_of((0..20_000).map(|_| rng.random::<f64>()));
        // Each bin edge carries at most the 1% rank-error budget.
        for b in 0..10 {
            let mass = d.bin_mass(b as f64 / 10.0, (b + 1) as f64 / 10.0).unwrap();
            let frac = mass / d.total_weight();
            assert!((frac - 0.1).abs() < 0.02, "bin {b}: {frac}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let mut d = digest_of((0..1000).map(|v| (v as f64) / 1000.0));
        d.flush();
        let json = serde_json::to_string(&d).unwrap();
        let back: TDigest = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);
    }
}
