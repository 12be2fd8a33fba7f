//! Discrimination and calibration metrics: binary and one-vs-rest AUC ROC,
//! expected calibration error, density histograms on `[0, 1]`, the
//! 1-Wasserstein distance between them, three ideal reference histograms,
//! and the additive/multiplicative calibration scores built from those
//! pieces. Everything here is a pure function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scores::ScoreMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("inputs have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("binary AUC needs both classes present")]
    SingleClass,
    #[error("labels contain fewer than two distinct classes")]
    DegenerateLabels,
    #[error("histograms have different bin counts: {0} vs {1}")]
    BinCountMismatch(usize, usize),
    #[error("input is empty")]
    EmptyInput,
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("bin count must be at least 2, got {0}")]
    InvalidBinCount(usize),
    #[error("inputs have zero variance")]
    ZeroVariance,
    #[error("AUC {0} outside [0, 1]")]
    InvalidAuc(f64),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
}

/// Bin index of a value in a fixed-width partition of `[0, 1]`; a value of
/// exactly 1.0 belongs to the last bin.
pub fn bin_index(value: f64, bins: usize) -> usize {
    ((value * bins as f64) as usize).min(bins - 1)
}

/// A density histogram: fixed-width bins on `[0, 1]` with unit total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    mass: Vec<f64>,
}

impl Histogram {
    pub fn new(mass: Vec<f64>) -> Result<Self, MetricError> {
        if mass.len() < 2 {
            return Err(MetricError::InvalidBinCount(mass.len()));
        }
        if mass.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(MetricError::OutOfRange(
                *mass
                    .iter()
                    .find(|m| !m.is_finite() || **m < 0.0)
                    .unwrap(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(MetricError::OutOfRange(total));
        }
        Ok(Self { mass })
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Midpoint of bin `b`.
    pub fn midpoint(&self, b: usize) -> f64 {
        (b as f64 + 0.5) / self.mass.len() as f64
    }
}

/// Bins values from `[0, 1]` into a unit-mass histogram.
pub fn density_histogram(values: &[f64], bins: usize) -> Result<Histogram, MetricError> {
    if bins < 2 {
        return Err(MetricError::InvalidBinCount(bins));
    }
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(MetricError::OutOfRange(v));
        }
        counts[bin_index(v, bins)] += 1;
    }
    let n = values.len() as f64;
    Ok(Histogram {
        mass: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// 1-Wasserstein distance between two unit-mass histograms with bin mass
/// placed at midpoints; equals the sum of absolute CDF differences times
/// the bin width, and is bounded by 1 on `[0, 1]` support.
pub fn wasserstein1(h1: &Histogram, h2: &Histogram) -> Result<f64, MetricError> {
    if h1.bins() != h2.bins() {
        return Err(MetricError::BinCountMismatch(h1.bins(), h2.bins()));
    }
    let bins = h1.bins();
    let width = 1.0 / bins as f64;
    let mut cdf_gap = 0.0;
    let mut distance = 0.0;
    for b in 0..bins {
        cdf_gap += h1.mass()[b] - h2.mass()[b];
        distance += cdf_gap.abs() * width;
    }
    Ok(distance)
}

/// The three ideal score-histogram shapes that calibration quality is
/// measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Perfectly calibrated model: scores uniform over `[0, 1]`.
    Pcm,
    /// Almost-perfect calibration with perfect classification: scores
    /// uniform over `(1/n, 1]`, zero below the chance level.
    Apcm,
    /// Perfect classification with perfect confidence: mass `(n-1)/n` at
    /// zero and `1/n` at one, independent of class prevalence.
    Pcpccm,
}

impl ReferenceKind {
    pub const ALL: [ReferenceKind; 3] = [
        ReferenceKind::Pcpccm,
        ReferenceKind::Pcm,
        ReferenceKind::Apcm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ReferenceKind::Pcm => "pcm",
            ReferenceKind::Apcm => "apcm",
            ReferenceKind::Pcpccm => "pcpccm",
        }
    }
}

/// Builds the ideal reference histogram of the given shape for `n_classes`
/// classes over `bins` fixed-width bins.
pub fn reference_histogram(
    kind: ReferenceKind,
    n_classes: usize,
    bins: usize,
) -> Result<Histogram, MetricError> {
    if n_classes < 2 {
        return Err(MetricError::TooFewClasses(n_classes));
    }
    if bins < 2 {
        return Err(MetricError::InvalidBinCount(bins));
    }
    let mass = match kind {
        ReferenceKind::Pcm => vec![1.0 / bins as f64; bins],
        ReferenceKind::Apcm => {
            // Uniform over the region above the chance score 1/n; a bin
            // straddling the boundary carries its overlapping share.
            let threshold = 1.0 / n_classes as f64;
            let support = 1.0 - threshold;
            let width = 1.0 / bins as f64;
            (0..bins)
                .map(|b| {
                    let lo = b as f64 * width;
                    let hi = (b + 1) as f64 * width;
                    let overlap = (hi.min(1.0) - lo.max(threshold)).max(0.0);
                    overlap / support
                })
                .collect()
        }
        ReferenceKind::Pcpccm => {
            let mut mass = vec![0.0; bins];
            mass[0] = (n_classes - 1) as f64 / n_classes as f64;
            mass[bins - 1] = 1.0 / n_classes as f64;
            mass
        }
    };
    Histogram::new(mass)
}

/// Binary AUC ROC as the Mann-Whitney rank statistic: the probability that
/// a random positive outranks a random negative, ties counting half.
pub fn auc_binary(scores: &[f64], positives: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != positives.len() {
        return Err(MetricError::LengthMismatch(scores.len(), positives.len()));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    // Average ranks over tie runs; rank arithmetic stays exact in f64
    // (integer halves), so this matches exhaustive pair counting.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    let auc = (rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64);
    Ok(auc)
}

/// One-vs-rest AUC ROC weighted by class support. Classes absent from the
/// labels contribute weight zero.
pub fn auc_ovr_weighted(scores: &ScoreMatrix, labels: &[usize]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n_classes = scores.n_classes();
    let mut support = vec![0usize; n_classes];
    for &label in labels {
        if label >= n_classes {
            return Err(MetricError::LabelOutOfRange { label, n_classes });
        }
        support[label] += 1;
    }
    if support.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(MetricError::DegenerateLabels);
    }
    let n = labels.len() as f64;
    let mut weighted = 0.0;
    for (class, &count) in support.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let column = scores.column(class);
        let positives: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        let auc = auc_binary(&column, &positives)?;
        weighted += (count as f64 / n) * auc;
    }
    Ok(weighted)
}

/// Expected calibration error, confidence variant: instances are binned by
/// their top-1 confidence and the gap between per-bin accuracy and mean
/// confidence is averaged with bin-count weights.
pub fn ece(calibrated: &ScoreMatrix, labels: &[usize], bins: usize) -> Result<f64, MetricError> {
    if bins < 2 {
        return Err(MetricError::InvalidBinCount(bins));
    }
    if calibrated.len() != labels.len() {
        return Err(MetricError::LengthMismatch(calibrated.len(), labels.len()));
    }
    if calibrated.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let stats = reliability_data(calibrated, labels, bins)?;
    let n = calibrated.len() as f64;
    Ok(stats
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.count as f64 / n) * (b.accuracy - b.mean_confidence).abs())
        .sum())
}

/// One bin of a reliability diagram / validity plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Per-bin confidence, accuracy, and count over all `bins` bins, for
/// plotting by external tools. Empty bins report zeros.
pub fn reliability_data(
    calibrated: &ScoreMatrix,
    labels: &[usize],
    bins: usize,
) -> Result<Vec<ReliabilityBin>, MetricError> {
    if bins < 2 {
        return Err(MetricError::InvalidBinCount(bins));
    }
    if calibrated.len() != labels.len() {
        return Err(MetricError::LengthMismatch(calibrated.len(), labels.len()));
    }
    let mut counts = vec![0usize; bins];
    let mut conf_sums = vec![0.0f64; bins];
    let mut correct = vec![0usize; bins];
    for (row, &label) in calibrated.iter().zip(labels) {
        let predicted = row.predicted_class();
        let confidence = row.score(predicted);
        let b = bin_index(confidence, bins);
        counts[b] += 1;
        conf_sums[b] += confidence;
        correct[b] += usize::from(predicted == label);
    }
    Ok((0..bins)
        .map(|b| ReliabilityBin {
            bin: b,
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            mean_confidence: if counts[b] > 0 {
                conf_sums[b] / counts[b] as f64
            } else {
                0.0
            },
            accuracy: if counts[b] > 0 {
                correct[b] as f64 / counts[b] as f64
            } else {
                0.0
            },
            count: counts[b],
        })
        .collect())
}

/// A calibration score split into its discrimination term and the
/// histogram-proximity remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDecomposition {
    pub score: f64,
    pub k_term: f64,
    pub pcs_minus_k: f64,
}

/// Additive combination: `k_term + pcs_minus_k`.
pub fn apcs_from_parts(k_term: f64, pcs_minus_k: f64) -> f64 {
    k_term + pcs_minus_k
}

/// Multiplicative combination: `k_term * pcs_minus_k`.
pub fn mpcs_from_parts(k_term: f64, pcs_minus_k: f64) -> f64 {
    k_term * pcs_minus_k
}

fn mean_histogram_proximity(
    class_histograms: &[Histogram],
    reference: &Histogram,
) -> Result<f64, MetricError> {
    if class_histograms.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut sum = 0.0;
    for h in class_histograms {
        sum += 1.0 - wasserstein1(h, reference)?;
    }
    Ok(sum / class_histograms.len() as f64)
}

/// Additive probability calibration score: `|0.5 - auc|` plus the mean
/// per-class histogram proximity scaled into `[0, 0.5]`. One per-class
/// histogram is expected, built from that class's calibrated scores over
/// all evaluated instances.
pub fn apcs(
    auc: f64,
    class_histograms: &[Histogram],
    reference: &Histogram,
) -> Result<ScoreDecomposition, MetricError> {
    if !(0.0..=1.0).contains(&auc) {
        return Err(MetricError::InvalidAuc(auc));
    }
    let k_term = (0.5 - auc).abs();
    let pcs_minus_k = mean_histogram_proximity(class_histograms, reference)? / 2.0;
    Ok(ScoreDecomposition {
        score: apcs_from_parts(k_term, pcs_minus_k),
        k_term,
        pcs_minus_k,
    })
}

/// Multiplicative probability calibration score: `2 * |0.5 - auc|` times
/// the mean per-class histogram proximity. Zero whenever the classifier is
/// no better than chance.
pub fn mpcs(
    auc: f64,
    class_histograms: &[Histogram],
    reference: &Histogram,
) -> Result<ScoreDecomposition, MetricError> {
    if !(0.0..=1.0).contains(&auc) {
        return Err(MetricError::InvalidAuc(auc));
    }
    let k_term = 2.0 * (0.5 - auc).abs();
    let pcs_minus_k = mean_histogram_proximity(class_histograms, reference)?;
    Ok(ScoreDecomposition {
        score: mpcs_from_parts(k_term, pcs_minus_k),
        k_term,
        pcs_minus_k,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricError::EmptyInput);
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x).powi(2);
        var_y += (y - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Scores of one technique against a single reference shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub kind: ReferenceKind,
    pub apcs: ScoreDecomposition,
    pub mpcs: ScoreDecomposition,
}

/// The full metric set for one (model, technique) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc_roc: f64,
    pub ece: f64,
    pub by_reference: Vec<ReferenceScores>,
}

/// Evaluates the calibration scores against all three reference shapes.
/// `class_histograms` must hold one histogram per class (each built from
/// the calibrated class scores over all evaluated instances).
pub fn metric_report(
    auc_roc: f64,
    ece: f64,
    class_histograms: &[Histogram],
    bins: usize,
) -> Result<MetricReport, MetricError> {
    let n_classes = class_histograms.len();
    let mut by_reference = Vec::with_capacity(ReferenceKind::ALL.len());
    for kind in ReferenceKind::ALL {
        let reference = reference_histogram(kind, n_classes, bins)?;
        by_reference.push(ReferenceScores {
            kind,
            apcs: apcs(auc_roc, class_histograms, &reference)?,
            mpcs: mpcs(auc_roc, class_histograms, &reference)?,
        });
    }
    Ok(MetricReport {
        auc_roc,
        ece,
        by_reference,
    })
}
