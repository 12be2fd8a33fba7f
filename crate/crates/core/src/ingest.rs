//! Dataset loading, seeded synthetic generation, and mutual-information
//! feature selection.
//!
//! The CSV schema is `id,f0..f{d-1}[,label]` preceded by a comment line
//! `# n_classes=<n>`; UTF-8, `.` decimal point, no thousands separators.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Instance, RngSeed};

/// Bins used by the mutual-information estimator. The feature is cut into
/// this many equal-frequency bins before plugging empirical frequencies
/// into the MI sum.
pub const MI_DEFAULT_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: cannot parse value")]
    ParseError { line: usize },
    #[error("line {line}: expected {expected} columns, got {got}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: label {label} out of range for {n_classes} classes")]
    LabelOutOfRange {
        line: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("missing `# n_classes=<n>` comment line")]
    MissingClassCount,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("inputs have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bin count must be at least 2, got {0}")]
    InvalidBinCount(usize),
    #[error("train set is empty")]
    EmptyTrainSet,
    #[error("instance {id} is unlabeled")]
    UnlabeledInstance { id: u64 },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Seeded Gaussian class-conditional generator standing in for real
/// embedding data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    /// Exact instance count per class.
    pub class_counts: Vec<usize>,
    pub dim: usize,
    /// Per-class mean vectors, each of length `dim`.
    pub class_means: Vec<Vec<f64>>,
    /// Isotropic standard deviation around each class mean.
    pub spread: f64,
    /// Multiplier on the spread; cranking it up blurs the classes together
    /// until they are indistinguishable (AUC drifts to 0.5).
    pub overlap: f64,
    pub seed: RngSeed,
}

impl SyntheticConfig {
    /// Axis-aligned means: class `c` sits at `separation` along feature
    /// axis `c`, everything else at zero.
    pub fn axis_means(n_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
        (0..n_classes)
            .map(|c| {
                let mut mean = vec![0.0; dim];
                if c < dim {
                    mean[c] = separation;
                }
                mean
            })
            .collect()
    }

    /// The default use-case shape: 3 classes with an 85/10/5 percent
    /// imbalance over 64 features.
    pub fn default_imbalanced(total: usize, seed: RngSeed) -> Self {
        let c0 = (total as f64 * 0.85).round() as usize;
        let c1 = (total as f64 * 0.10).round() as usize;
        let c2 = total.saturating_sub(c0 + c1).max(1);
        let dim = 64;
        Self {
            n_classes: 3,
            class_counts: vec![c0, c1, c2],
            dim,
            class_means: Self::axis_means(3, dim, 1.0),
            spread: 0.25,
            overlap: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.n_classes < 2 {
            return Err(IngestError::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.class_counts.len() != self.n_classes {
            return Err(IngestError::InvalidConfig(format!(
                "{} class counts for {} classes",
                self.class_counts.len(),
                self.n_classes
            )));
        }
        if self.class_counts.contains(&0) {
            return Err(IngestError::InvalidConfig("class count of zero".into()));
        }
        if self.dim == 0 {
            return Err(IngestError::InvalidConfig("feature dimension zero".into()));
        }
        if self.class_means.len() != self.n_classes
            || self.class_means.iter().any(|m| m.len() != self.dim)
        {
            return Err(IngestError::InvalidConfig(
                "class means must be one vector of length dim per class".into(),
            ));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(IngestError::InvalidConfig("spread must be positive".into()));
        }
        if !(self.overlap > 0.0 && self.overlap.is_finite()) {
            return Err(IngestError::InvalidConfig(
                "overlap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a labeled dataset with Gaussian class-conditional features.
/// Deterministic per seed; class counts come out exactly as configured.
pub fn gen_synthetic(config: &SyntheticConfig) -> Result<Dataset, IngestError> {
    config.validate()?;
    let sigma = config.spread * config.overlap;
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| IngestError::InvalidConfig(format!("bad spread: {e}")))?;
    let mut instances = Vec::with_capacity(config.class_counts.iter().sum());
    let mut id = 0u64;
    for (class, &count) in config.class_counts.iter().enumerate() {
        let mut rng = config.seed.derive(class as u64 + 1).rng();
        let mean = &config.class_means[class];
        for _ in 0..count {
            let features = mean.iter().map(|&m| m + normal.sample(&mut rng)).collect();
            instances.push(Instance::new(id, features, Some(class)));
            id += 1;
        }
    }
    Ok(Dataset::new(instances, config.n_classes)?)
}

/// Loads a dataset from the CSV schema above. Row order is preserved and
/// ids are assigned `0..N-1` in file order. A file without a label column
/// yields unlabeled instances (usable only as pool/unlabeled data).
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_csv(&content)
}

/// Parses the CSV schema from an in-memory string. Line numbers in errors
/// are 1-based over the whole file, comments and header included.
pub fn parse_csv(content: &str) -> Result<Dataset, IngestError> {
    let mut n_classes: Option<usize> = None;
    let mut header: Option<(usize, bool)> = None; // (dim, has_label)
    let mut instances = Vec::new();
    let mut next_id = 0u64;

    for (idx, raw_line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(value) = comment.strip_prefix("n_classes=") {
                n_classes = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| IngestError::ParseError { line: line_no })?,
                );
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match header {
            None => {
                if fields.first() != Some(&"id") {
                    return Err(IngestError::BadHeader(
                        "first column must be `id`".to_string(),
                    ));
                }
                let has_label = fields.last() == Some(&"label");
                let dim = fields.len() - 1 - usize::from(has_label);
                if dim == 0 {
                    return Err(IngestError::BadHeader("no feature columns".to_string()));
                }
                for (j, name) in fields[1..1 + dim].iter().enumerate() {
                    if *name != format!("f{j}") {
                        return Err(IngestError::BadHeader(format!(
                            "expected feature column `f{j}`, found `{name}`"
                        )));
                    }
                }
                header = Some((dim, has_label));
            }
            Some((dim, has_label)) => {
                let expected = 1 + dim + usize::from(has_label);
                if fields.len() != expected {
                    return Err(IngestError::DimensionMismatch {
                        line: line_no,
                        expected,
                        got: fields.len(),
                    });
                }
                // The id column must parse but file order defines the ids.
                fields[0]
                    .parse::<u64>()
                    .map_err(|_| IngestError::ParseError { line: line_no })?;
                let mut features = Vec::with_capacity(dim);
                for field in &fields[1..1 + dim] {
                    features.push(
                        field
                            .parse::<f64>()
                            .map_err(|_| IngestError::ParseError { line: line_no })?,
                    );
                }
                let label = if has_label {
                    let label = fields[1 + dim]
                        .parse::<usize>()
                        .map_err(|_| IngestError::ParseError { line: line_no })?;
                    let n = n_classes.ok_or(IngestError::MissingClassCount)?;
                    if label >= n {
                        return Err(IngestError::LabelOutOfRange {
                            line: line_no,
                            label,
                            n_classes: n,
                        });
                    }
                    Some(label)
                } else {
                    None
                };
                instances.push(Instance::new(next_id, features, label));
                next_id += 1;
            }
        }
    }

    let n_classes = n_classes.ok_or(IngestError::MissingClassCount)?;
    Ok(Dataset::new(instances, n_classes)?)
}

/// Writes a dataset back out in the same CSV schema `load_csv` reads.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let has_label = dataset.fully_labeled() && !dataset.is_empty();
    let dim = dataset.dim();
    let mut out = String::new();
    let _ = writeln!(out, "# n_classes={}", dataset.n_classes());
    let mut header = String::from("id");
    for j in 0..dim {
        let _ = write!(header, ",f{j}");
    }
    if has_label {
        header.push_str(",label");
    }
    let _ = writeln!(out, "{header}");
    for inst in dataset.iter() {
        let _ = write!(out, "{}", inst.id);
        for f in &inst.features {
            let _ = write!(out, ",{f}");
        }
        if has_label {
            let _ = write!(out, ",{}", inst.label.unwrap());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Plug-in mutual information (nats) between a real feature and class
/// labels, after cutting the feature into `bins` equal-frequency bins.
/// Tied values always share a bin, so a constant feature scores zero and
/// the estimate is invariant to strictly monotone transforms.
pub fn mutual_information(
    feature: &[f64],
    labels: &[usize],
    bins: usize,
) -> Result<f64, IngestError> {
    if feature.len() != labels.len() {
        return Err(IngestError::LengthMismatch(feature.len(), labels.len()));
    }
    if bins < 2 {
        return Err(IngestError::InvalidBinCount(bins));
    }
    let n = feature.len();
    if n == 0 {
        return Ok(0.0);
    }

    // Equal-frequency edges at rank boundaries; assignment by binary search
    // keeps equal values together.
    let mut sorted: Vec<f64> = feature.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut edges = Vec::with_capacity(bins - 1);
    for b in 0..bins - 1 {
        edges.push(sorted[((b + 1) * n).div_ceil(bins) - 1]);
    }
    let bin_of = |v: f64| -> usize {
        edges
            .iter()
            .position(|&e| v <= e)
            .unwrap_or(bins - 1)
    };

    let n_labels = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut joint = vec![vec![0usize; n_labels]; bins];
    for (&v, &y) in feature.iter().zip(labels) {
        joint[bin_of(v)][y] += 1;
    }
    let mut bin_totals = vec![0usize; bins];
    let mut label_totals = vec![0usize; n_labels];
    for (b, row) in joint.iter().enumerate() {
        for (y, &count) in row.iter().enumerate() {
            bin_totals[b] += count;
            label_totals[y] += count;
        }
    }
    let n_f = n as f64;
    let mut mi = 0.0;
    for (b, row) in joint.iter().enumerate() {
        for (y, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let p_xy = count as f64 / n_f;
            let p_x = bin_totals[b] as f64 / n_f;
            let p_y = label_totals[y] as f64 / n_f;
            mi += p_xy * (p_xy / (p_x * p_y)).ln();
        }
    }
    Ok(mi.max(0.0))
}

/// The result of top-K mutual-information selection on a train set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Selected feature indices, ordered by descending MI score, ties
    /// broken by ascending index.
    pub selected_indices: Vec<usize>,
    /// MI score (nats) per original feature.
    pub scores: Vec<f64>,
}

impl FeatureSelection {
    pub fn k(&self) -> usize {
        self.selected_indices.len()
    }

    /// Projects any dataset onto the selected feature columns.
    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        dataset.project(&self.selected_indices)
    }
}

/// Scores every feature of the train set by mutual information with the
/// labels and keeps the top `K = floor(sqrt(N))`, clamped to `[1, d]`.
/// Only the train split participates, so the selection cannot leak
/// information from evaluation data.
pub fn select_top_k(train: &Dataset) -> Result<FeatureSelection, IngestError> {
    if train.is_empty() {
        return Err(IngestError::EmptyTrainSet);
    }
    let labels = train.labels().map_err(|e| match e {
        crate::data::DataError::UnlabeledInstance { id } => IngestError::UnlabeledInstance { id },
        other => IngestError::Data(other),
    })?;
    let d = train.dim();
    let k = ((train.len() as f64).sqrt().floor() as usize).clamp(1, d);

    let mut scores = Vec::with_capacity(d);
    for j in 0..d {
        let column: Vec<f64> = train.iter().map(|i| i.features[j]).collect();
        scores.push(mutual_information(&column, &labels, MI_DEFAULT_BINS)?);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(FeatureSelection {
        selected_indices: order,
        scores,
    })
}
