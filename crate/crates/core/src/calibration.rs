//! Calibration maps: per-class Platt sigmoids, temperature scaling,
//! ground-truth histogram binning, and the approximate histogram technique
//! that needs no labels (fixed and adaptive modes, backed by t-digest
//! sketches).
//!
//! Every map takes a raw [`ScoreVector`] and returns a calibrated one.
//! After the per-class transform the vector is renormalized back onto the
//! simplex, so callers can always treat outputs as probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::bin_index;
use crate::scores::{ScoreMatrix, ScoreVector};
use crate::tdigest::{DigestError, TDigest};

/// Clamp constant for the logit transform in temperature scaling; scores
/// of exactly 0 or 1 would otherwise produce infinities.
pub const LOGIT_EPSILON: f64 = 1e-6;

/// Default fixed-width bin count for histogram-based maps.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("class {0} has no instances in the calibration set")]
    MissingClass(usize),
    #[error("scores and labels have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("bin count must be at least 2, got {0}")]
    InvalidBinCount(usize),
    #[error("cannot update a fixed-mode map")]
    FixedModeUpdate,
    #[error("score vector has {got} classes, map expects {expected}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("this technique requires ground-truth labels")]
    LabelsRequired,
    #[error(transparent)]
    Digest(#[from] DigestError),
}

/// The calibration techniques compared by the experiment suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibTechnique {
    None,
    Platt,
    Temperature,
    HistogramGt,
    AhpcFixed,
    AhpcAdaptive,
}

impl CalibTechnique {
    pub const ALL: [CalibTechnique; 6] = [
        CalibTechnique::None,
        CalibTechnique::Platt,
        CalibTechnique::Temperature,
        CalibTechnique::HistogramGt,
        CalibTechnique::AhpcFixed,
        CalibTechnique::AhpcAdaptive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CalibTechnique::None => "none",
            CalibTechnique::Platt => "platt",
            CalibTechnique::Temperature => "temperature",
            CalibTechnique::HistogramGt => "histogram_gt",
            CalibTechnique::AhpcFixed => "ahpc_fixed",
            CalibTechnique::AhpcAdaptive => "ahpc_adaptive",
        }
    }

    /// Whether fitting this technique consumes ground-truth labels.
    pub fn needs_labels(&self) -> bool {
        matches!(
            self,
            CalibTechnique::Platt | CalibTechnique::Temperature | CalibTechnique::HistogramGt
        )
    }
}

/// One-vs-rest sigmoid map: class `c` transforms through
/// `1 / (1 + exp(a[c] * s + b[c]))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlattMap {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PlattMap {
    pub fn n_classes(&self) -> usize {
        self.a.len()
    }

    pub fn sigmoid(&self, class: usize, score: f64) -> f64 {
        1.0 / (1.0 + (self.a[class] * score + self.b[class]).exp())
    }
}

/// Single-parameter temperature map applied through a logit transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureMap {
    pub temperature: f64,
    pub epsilon: f64,
}

/// Ground-truth empirical binning: per class and score bin, the
/// Laplace-smoothed positive frequency observed in the calibration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGtMap {
    pub bins: usize,
    /// `table[class][bin]` is the calibrated probability.
    pub table: Vec<Vec<f64>>,
    /// `support[class][bin]` counts calibration instances in the bin.
    pub support: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AhpcMode {
    /// Built from the calibration set only; never updated.
    Fixed,
    /// May keep absorbing production predictions via [`ahpc_update`].
    Adaptive,
}

/// Label-free histogram calibration state: per class, one sketch of all
/// scores and one sketch of the scores on instances the model itself
/// assigned to that class. Under a perfect classifier the second sketch
/// coincides with the true positives, which is exactly what makes the
/// per-bin mass ratio a calibrated probability without ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhpcState {
    pub bins: usize,
    pub mode: AhpcMode,
    digest_all: Vec<TDigest>,
    digest_pred: Vec<TDigest>,
}

impl AhpcState {
    pub fn n_classes(&self) -> usize {
        self.digest_all.len()
    }

    pub fn digest_all(&self, class: usize) -> &TDigest {
        &self.digest_all[class]
    }

    pub fn digest_pred(&self, class: usize) -> &TDigest {
        &self.digest_pred[class]
    }

    fn absorb(&mut self, scores: &ScoreMatrix) -> Result<(), CalibrationError> {
        if scores.n_classes() != self.n_classes() {
            return Err(CalibrationError::ClassCountMismatch {
                expected: self.n_classes(),
                got: scores.n_classes(),
            });
        }
        for row in scores.iter() {
            let predicted = row.predicted_class();
            for class in 0..self.n_classes() {
                let s = row.score(class);
                self.digest_all[class].add(s, 1.0)?;
                if class == predicted {
                    self.digest_pred[class].add(s, 1.0)?;
                }
            }
        }
        for digest in self.digest_all.iter_mut().chain(self.digest_pred.iter_mut()) {
            digest.flush();
        }
        Ok(())
    }

    /// Calibrated probability for one class score: the mass of
    /// pseudo-positive scores in the score's bin over the mass of all
    /// scores there. An unsupported bin falls back to its midpoint.
    pub fn bin_probability(&self, class: usize, score: f64) -> Result<f64, CalibrationError> {
        let b = bin_index(score.clamp(0.0, 1.0), self.bins);
        let lo = b as f64 / self.bins as f64;
        let hi = (b + 1) as f64 / self.bins as f64;
        let midpoint = (lo + hi) / 2.0;
        if self.digest_all[class].is_empty() {
            return Ok(midpoint);
        }
        let denom = self.digest_all[class].bin_mass(lo, hi)?;
        if denom <= 1e-12 {
            return Ok(midpoint);
        }
        let numer = if self.digest_pred[class].is_empty() {
            0.0
        } else {
            self.digest_pred[class].bin_mass(lo, hi)?
        };
        Ok((numer / denom).clamp(0.0, 1.0))
    }
}

/// A fitted calibration map, tagged by technique for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "technique", rename_all = "snake_case")]
pub enum CalibrationMap {
    /// Identity map: scores pass through untouched.
    None,
    Platt(PlattMap),
    Temperature(TemperatureMap),
    HistogramGt(HistogramGtMap),
    Ahpc(AhpcState),
}

fn check_labels(
    scores: &ScoreMatrix,
    labels: &[usize],
) -> Result<(), CalibrationError> {
    if scores.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(CalibrationError::EmptyCalibrationSet);
    }
    let n_classes = scores.n_classes();
    for &label in labels {
        if label >= n_classes {
            return Err(CalibrationError::LabelOutOfRange { label, n_classes });
        }
    }
    Ok(())
}

/// Fits a one-vs-rest Platt map. Per class the sigmoid parameters minimize
/// the cross-entropy against the smoothed targets `(N+ + 1)/(N+ + 2)` and
/// `1/(N- + 2)`, by damped Newton iterations run to a gradient norm below
/// 1e-8 or 200 iterations.
pub fn fit_platt(scores: &ScoreMatrix, labels: &[usize]) -> Result<PlattMap, CalibrationError> {
    check_labels(scores, labels)?;
    let n_classes = scores.n_classes();
    let mut a = Vec::with_capacity(n_classes);
    let mut b = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        if !labels.contains(&class) {
            return Err(CalibrationError::MissingClass(class));
        }
        let column = scores.column(class);
        let positives: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        let (a_c, b_c) = fit_sigmoid(&column, &positives);
        a.push(a_c);
        b.push(b_c);
    }
    Ok(PlattMap { a, b })
}

/// Newton fit of `p = 1/(1 + exp(a*f + b))` against smoothed targets.
fn fit_sigmoid(scores: &[f64], positives: &[bool]) -> (f64, f64) {
    let n_pos = positives.iter().filter(|&&p| p).count() as f64;
    let n_neg = positives.len() as f64 - n_pos;
    let target_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let target_neg = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = positives
        .iter()
        .map(|&p| if p { target_pos } else { target_neg })
        .collect();

    // loss(z) = ln(1 + e^z) - (1 - t) z  with z = a*f + b, evaluated in a
    // numerically stable split.
    let loss_at = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = a * f + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p() - (1.0 - t) * z
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut loss = loss_at(a, b);
    for _ in 0..200 {
        let mut g0 = 0.0;
        let mut g1 = 0.0;
        let mut h00 = 0.0;
        let mut h01 = 0.0;
        let mut h11 = 0.0;
        for (&f, &t) in scores.iter().zip(&targets) {
            let z = a * f + b;
            let p = 1.0 / (1.0 + z.exp());
            let d = t - p;
            g0 += d * f;
            g1 += d;
            let w = (p * (1.0 - p)).max(1e-12);
            h00 += w * f * f;
            h01 += w * f;
            h11 += w;
        }
        if g0.abs().max(g1.abs()) < 1e-8 {
            break;
        }
        let det = h00 * h11 - h01 * h01;
        let (mut da, mut db) = if det.abs() > 1e-18 {
            (-(h11 * g0 - h01 * g1) / det, -(h00 * g1 - h01 * g0) / det)
        } else {
            (-g0, -g1)
        };
        // Damping: halve the step until the loss stops increasing.
        let mut stepped = false;
        for _ in 0..40 {
            let candidate = loss_at(a + da, b + db);
            if candidate <= loss + 1e-15 {
                a += da;
                b += db;
                loss = candidate;
                stepped = true;
                break;
            }
            da /= 2.0;
            db /= 2.0;
        }
        if !stepped {
            break;
        }
    }
    (a, b)
}

/// Fits temperature scaling: scores are clamped, log-transformed, divided
/// by `T`, and softmaxed; `T` minimizes the negative log-likelihood via
/// golden-section search on `ln T` over `[-4, 4]` to a width of 1e-4.
pub fn fit_temperature(
    scores: &ScoreMatrix,
    labels: &[usize],
) -> Result<TemperatureMap, CalibrationError> {
    check_labels(scores, labels)?;
    let nll = |log_t: f64| -> f64 {
        let t = log_t.exp();
        let mut total = 0.0;
        for (row, &label) in scores.iter().zip(labels) {
            let logits: Vec<f64> = row
                .scores()
                .iter()
                .map(|&s| s.clamp(LOGIT_EPSILON, 1.0 - LOGIT_EPSILON).ln() / t)
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
            total -= logits[label] - log_sum;
        }
        total
    };

    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut lo = -4.0;
    let mut hi = 4.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = nll(x1);
    let mut f2 = nll(x2);
    while hi - lo > 1e-4 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = nll(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = nll(x2);
        }
    }
    Ok(TemperatureMap {
        temperature: ((lo + hi) / 2.0).exp(),
        epsilon: LOGIT_EPSILON,
    })
}

/// Fits ground-truth histogram binning: per class and fixed-width bin over
/// that class's score column, the calibrated value is the Laplace-smoothed
/// positive frequency `(pos + 1)/(count + 2)`; an empty bin falls back to
/// its midpoint.
pub fn fit_histogram_gt(
    scores: &ScoreMatrix,
    labels: &[usize],
    bins: usize,
) -> Result<HistogramGtMap, CalibrationError> {
    if bins < 2 {
        return Err(CalibrationError::InvalidBinCount(bins));
    }
    check_labels(scores, labels)?;
    let n_classes = scores.n_classes();
    let mut counts = vec![vec![0usize; bins]; n_classes];
    let mut positives = vec![vec![0usize; bins]; n_classes];
    for (row, &label) in scores.iter().zip(labels) {
        for class in 0..n_classes {
            let b = bin_index(row.score(class), bins);
            counts[class][b] += 1;
            positives[class][b] += usize::from(label == class);
        }
    }
    let table = (0..n_classes)
        .map(|class| {
            (0..bins)
                .map(|b| {
                    if counts[class][b] == 0 {
                        (b as f64 + 0.5) / bins as f64
                    } else {
                        (positives[class][b] + 1) as f64 / (counts[class][b] + 2) as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(HistogramGtMap {
        bins,
        table,
        support: counts,
    })
}

/// Builds the label-free histogram state from prediction scores alone: per
/// instance and class, the class score enters that class's all-scores
/// sketch, and additionally the pseudo-positive sketch when the row's
/// argmax lands on the class. No labels are consumed.
pub fn fit_ahpc(
    scores: &ScoreMatrix,
    bins: usize,
    mode: AhpcMode,
    compression: f64,
) -> Result<AhpcState, CalibrationError> {
    if bins < 2 {
        return Err(CalibrationError::InvalidBinCount(bins));
    }
    let n_classes = scores.n_classes();
    let mut state = AhpcState {
        bins,
        mode,
        digest_all: (0..n_classes).map(|_| TDigest::new(compression)).collect(),
        digest_pred: (0..n_classes).map(|_| TDigest::new(compression)).collect(),
    };
    state.absorb(scores)?;
    Ok(state)
}

/// Extends an adaptive state with fresh prediction scores, returning the
/// updated state. Fixed-mode states refuse the update.
pub fn ahpc_update(
    state: &AhpcState,
    new_scores: &ScoreMatrix,
) -> Result<AhpcState, CalibrationError> {
    if state.mode != AhpcMode::Adaptive {
        return Err(CalibrationError::FixedModeUpdate);
    }
    let mut updated = state.clone();
    updated.absorb(new_scores)?;
    Ok(updated)
}

/// Fits the requested technique on a calibration set. Labels are only
/// touched by the techniques that need them; the histogram-based label-free
/// maps see just the score matrix.
pub fn fit_technique(
    technique: CalibTechnique,
    scores: &ScoreMatrix,
    labels: Option<&[usize]>,
    bins: usize,
    compression: f64,
) -> Result<CalibrationMap, CalibrationError> {
    match technique {
        CalibTechnique::None => Ok(CalibrationMap::None),
        CalibTechnique::Platt => {
            let labels = labels.ok_or(CalibrationError::LabelsRequired)?;
            Ok(CalibrationMap::Platt(fit_platt(scores, labels)?))
        }
        CalibTechnique::Temperature => {
            let labels = labels.ok_or(CalibrationError::LabelsRequired)?;
            Ok(CalibrationMap::Temperature(fit_temperature(scores, labels)?))
        }
        CalibTechnique::HistogramGt => {
            let labels = labels.ok_or(CalibrationError::LabelsRequired)?;
            Ok(CalibrationMap::HistogramGt(fit_histogram_gt(
                scores, labels, bins,
            )?))
        }
        CalibTechnique::AhpcFixed => Ok(CalibrationMap::Ahpc(fit_ahpc(
            scores,
            bins,
            AhpcMode::Fixed,
            compression,
        )?)),
        CalibTechnique::AhpcAdaptive => Ok(CalibrationMap::Ahpc(fit_ahpc(
            scores,
            bins,
            AhpcMode::Adaptive,
            compression,
        )?)),
    }
}

impl CalibrationMap {
    fn expected_classes(&self) -> Option<usize> {
        match self {
            CalibrationMap::None => None,
            CalibrationMap::Platt(m) => Some(m.n_classes()),
            CalibrationMap::Temperature(_) => None,
            CalibrationMap::HistogramGt(m) => Some(m.table.len()),
            CalibrationMap::Ahpc(m) => Some(m.n_classes()),
        }
    }

    /// Applies the map to one raw score vector and renormalizes onto the
    /// simplex.
    pub fn calibrate(&self, raw: &ScoreVector) -> Result<ScoreVector, CalibrationError> {
        if let Some(expected) = self.expected_classes() {
            if raw.n_classes() != expected {
                return Err(CalibrationError::ClassCountMismatch {
                    expected,
                    got: raw.n_classes(),
                });
            }
        }
        Ok(match self {
            CalibrationMap::None => raw.clone(),
            CalibrationMap::Platt(map) => {
                let values = raw
                    .scores()
                    .iter()
                    .enumerate()
                    .map(|(c, &s)| map.sigmoid(c, s))
                    .collect();
                ScoreVector::from_raw(values)
            }
            CalibrationMap::Temperature(map) => {
                let scaled: Vec<f64> = raw
                    .scores()
                    .iter()
                    .map(|&s| {
                        (s.clamp(map.epsilon, 1.0 - map.epsilon).ln() / map.temperature).exp()
                    })
                    .collect();
                ScoreVector::from_raw(scaled)
            }
            CalibrationMap::HistogramGt(map) => {
                let values = raw
                    .scores()
                    .iter()
                    .enumerate()
                    .map(|(class, &s)| map.table[class][bin_index(s, map.bins)])
                    .collect();
                ScoreVector::from_raw(values)
            }
            CalibrationMap::Ahpc(state) => {
                let mut values = Vec::with_capacity(raw.n_classes());
                for (class, &s) in raw.scores().iter().enumerate() {
                    values.push(state.bin_probability(class, s)?);
                }
                ScoreVector::from_raw(values)
            }
        })
    }

    /// Applies the map row by row.
    pub fn calibrate_matrix(&self, raw: &ScoreMatrix) -> Result<ScoreMatrix, CalibrationError> {
        let mut out = ScoreMatrix::empty(raw.n_classes());
        for row in raw.iter() {
            let calibrated = self.calibrate(row)?;
            out.push(calibrated)
                .expect("calibrate preserves the class count");
        }
        Ok(out)
    }

    pub fn technique(&self) -> CalibTechnique {
        match self {
            CalibrationMap::None => CalibTechnique::None,
            CalibrationMap::Platt(_) => CalibTechnique::Platt,
            CalibrationMap::Temperature(_) => CalibTechnique::Temperature,
            CalibrationMap::HistogramGt(_) => CalibTechnique::HistogramGt,
            CalibrationMap::Ahpc(state) => match state.mode {
                AhpcMode::Fixed => CalibTechnique::AhpcFixed,
                AhpcMode::Adaptive => CalibTechnique::AhpcAdaptive,
            },
        }
    }
}
