//! Experiment harness: configuration, the calibration-comparison pipeline,
//! the active-learning experiment matrix, aggregate tables, CSV/JSON
//! emission, and a paired significance test.
//!
//! Suites parallelize across (fold, experiment, model) combinations with
//! seeds derived per combination, then write files from a single thread.
//! Per-combination failures become error rows instead of aborting the
//! whole suite, so one degenerate fold cannot sink a 160-run matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::active_learning::{
    run as run_al, AlConfig, AlRunResult, AlSetting, OracleSetting, QueryStrategy,
};
use crate::calibration::{
    ahpc_update, fit_technique, CalibTechnique, CalibrationMap,
};
use crate::classifiers::{fit, ModelFamily, ModelSpec};
use crate::data::{
    assemble_split, stratified_kfold, DataError, Dataset, FoldPlan, RngSeed, SplitSpec,
};
use crate::ingest::{gen_synthetic, load_csv, IngestError, SyntheticConfig};
use crate::metrics::{
    auc_ovr_weighted, density_histogram, ece, metric_report, pearson, reliability_data,
    MetricError, MetricReport, ReferenceKind, ReliabilityBin,
};
use crate::scores::ScoreMatrix;

const SEED_SYNTH: u64 = 0x01;
const SEED_FOLDS: u64 = 0x02;
const SEED_CALIB_MODEL: u64 = 0x03;
const SEED_AL_RUN: u64 = 0x04;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SuiteError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("report parse error in {path} line {line}: {message}")]
    ReportParse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("inputs have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("paired test needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn io_err(path: &Path, e: std::io::Error) -> SuiteError {
    SuiteError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Synthetic-data parameters as written in a config file. The master seed
/// drives the generator unless the dataset is loaded from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "defaults::total")]
    pub total: usize,
    /// Explicit per-class counts; the default is the 85/10/5 imbalance.
    #[serde(default)]
    pub class_counts: Option<Vec<usize>>,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::separation")]
    pub separation: f64,
    #[serde(default = "defaults::spread")]
    pub spread: f64,
    #[serde(default = "defaults::overlap")]
    pub overlap: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            total: defaults::total(),
            class_counts: None,
            dim: defaults::dim(),
            separation: defaults::separation(),
            spread: defaults::spread(),
            overlap: defaults::overlap(),
        }
    }
}

impl SyntheticSpec {
    pub fn materialize(&self, seed: RngSeed) -> Result<SyntheticConfig, SuiteError> {
        let class_counts = match &self.class_counts {
            Some(counts) => counts.clone(),
            None => {
                let c0 = (self.total as f64 * 0.85).round() as usize;
                let c1 = (self.total as f64 * 0.10).round() as usize;
                let c2 = self.total.saturating_sub(c0 + c1).max(1);
                vec![c0, c1, c2]
            }
        };
        let n_classes = class_counts.len();
        if n_classes < 2 {
            return Err(SuiteError::Config(
                "synthetic data needs at least 2 classes".into(),
            ));
        }
        Ok(SyntheticConfig {
            n_classes,
            class_counts,
            dim: self.dim,
            class_means: SyntheticConfig::axis_means(n_classes, self.dim, self.separation),
            spread: self.spread,
            overlap: self.overlap,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synthetic(SyntheticSpec),
}

mod defaults {
    use super::*;

    pub fn total() -> usize {
        600
    }
    pub fn dim() -> usize {
        64
    }
    pub fn separation() -> f64 {
        1.0
    }
    pub fn spread() -> f64 {
        0.25
    }
    pub fn overlap() -> f64 {
        1.0
    }
    pub fn k_folds() -> usize {
        10
    }
    pub fn models() -> Vec<ModelFamily> {
        vec![
            ModelFamily::gaussian_nb(),
            ModelFamily::knn(),
            ModelFamily::cart(),
            ModelFamily::linear(),
            ModelFamily::mlp(),
        ]
    }
    pub fn techniques() -> Vec<CalibTechnique> {
        CalibTechnique::ALL.to_vec()
    }
    pub fn experiments() -> Vec<u8> {
        (1..=8).collect()
    }
    pub fn thresholds() -> Vec<f64> {
        vec![0.95, 0.99]
    }
    pub fn bins() -> usize {
        10
    }
    pub fn compression() -> f64 {
        100.0
    }
    pub fn retrain_every() -> usize {
        1
    }
    pub fn keep_prob() -> f64 {
        0.5
    }
    pub fn use_soft_labels() -> bool {
        true
    }
    pub fn in_loop_calibration() -> CalibTechnique {
        CalibTechnique::Platt
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
}

/// Everything a suite run needs; loadable from JSON or TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "defaults::k_folds")]
    pub k_folds: usize,
    #[serde(default = "defaults::models")]
    pub models: Vec<ModelFamily>,
    #[serde(default = "defaults::techniques")]
    pub techniques: Vec<CalibTechnique>,
    /// Active-learning experiment numbers (1..=8).
    #[serde(default = "defaults::experiments")]
    pub experiments: Vec<u8>,
    #[serde(default = "defaults::thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "defaults::bins")]
    pub bins: usize,
    #[serde(default = "defaults::compression")]
    pub tdigest_compression: f64,
    #[serde(default = "defaults::retrain_every")]
    pub retrain_every: usize,
    #[serde(default = "defaults::keep_prob")]
    pub stream_keep_prob: f64,
    #[serde(default = "defaults::use_soft_labels")]
    pub use_soft_labels_in_training: bool,
    #[serde(default = "defaults::in_loop_calibration")]
    pub in_loop_calibration: CalibTechnique,
    /// Two-sided significance level for the paired t-test.
    #[serde(default = "defaults::alpha")]
    pub significance_alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn synthetic_default(seed: u64, out_dir: PathBuf) -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            k_folds: defaults::k_folds(),
            models: defaults::models(),
            techniques: defaults::techniques(),
            experiments: defaults::experiments(),
            thresholds: defaults::thresholds(),
            bins: defaults::bins(),
            tdigest_compression: defaults::compression(),
            retrain_every: defaults::retrain_every(),
            stream_keep_prob: defaults::keep_prob(),
            use_soft_labels_in_training: defaults::use_soft_labels(),
            in_loop_calibration: defaults::in_loop_calibration(),
            significance_alpha: defaults::alpha(),
            seed,
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.models.is_empty() {
            return Err(SuiteError::Config("models list is empty".into()));
        }
        if self.techniques.is_empty() {
            return Err(SuiteError::Config("techniques list is empty".into()));
        }
        if self.k_folds < 6 {
            return Err(SuiteError::Config(
                "k_folds must be at least 6 for the 1/1/3 split template".into(),
            ));
        }
        if self.bins < 2 {
            return Err(SuiteError::Config("bins must be at least 2".into()));
        }
        for &e in &self.experiments {
            if !(1..=8).contains(&e) {
                return Err(SuiteError::Config(format!("unknown experiment {e}")));
            }
        }
        for &t in &self.thresholds {
            if !(0.0 < t && t < 1.0) {
                return Err(SuiteError::Config(format!(
                    "threshold {t} outside (0, 1)"
                )));
            }
        }
        if !(0.0 < self.significance_alpha && self.significance_alpha < 1.0) {
            return Err(SuiteError::Config("alpha outside (0, 1)".into()));
        }
        if self.retrain_every == 0 {
            return Err(SuiteError::Config("retrain_every must be positive".into()));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset, SuiteError> {
        match &self.data {
            DataSource::Csv { path } => Ok(load_csv(path)?),
            DataSource::Synthetic(spec) => {
                let config = spec.materialize(RngSeed(self.seed).derive(SEED_SYNTH))?;
                Ok(gen_synthetic(&config)?)
            }
        }
    }
}

/// Table-1 experiment row: setting, query strategy, oracle.
pub fn experiment_setting(e: u8) -> Option<(AlSetting, QueryStrategy, OracleSetting)> {
    Some(match e {
        1 => (AlSetting::Pool, QueryStrategy::Random, OracleSetting::Human),
        2 => (
            AlSetting::Pool,
            QueryStrategy::Uncertainty,
            OracleSetting::Human,
        ),
        3 => (
            AlSetting::Pool,
            QueryStrategy::Uncertainty,
            OracleSetting::Machine,
        ),
        4 => (
            AlSetting::Pool,
            QueryStrategy::Uncertainty,
            OracleSetting::MachineConsensus,
        ),
        5 => (
            AlSetting::Stream,
            QueryStrategy::Random,
            OracleSetting::Human,
        ),
        6 => (
            AlSetting::Stream,
            QueryStrategy::Uncertainty,
            OracleSetting::Human,
        ),
        7 => (
            AlSetting::Stream,
            QueryStrategy::Uncertainty,
            OracleSetting::Machine,
        ),
        8 => (
            AlSetting::Stream,
            QueryStrategy::Uncertainty,
            OracleSetting::MachineConsensus,
        ),
        _ => return None,
    })
}

// ---------------------------------------------------------------------------
// Calibration suite
// ---------------------------------------------------------------------------

/// One (model, technique-row, fold) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibRow {
    pub model: String,
    /// Technique row label; adaptive histogram calibration contributes a
    /// `_start` and an `_end` row.
    pub technique: String,
    pub fold: usize,
    pub metrics: Option<MetricReport>,
    pub error: Option<String>,
}

/// Fold-mean row per (model, technique).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibMeanRow {
    pub model: String,
    pub technique: String,
    pub folds: usize,
    pub metrics: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub reference: ReferenceKind,
    pub metric: String,
    /// `None` when a zero-variance column makes the correlation undefined.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub model: String,
    pub technique: String,
    pub fold: usize,
    pub bin: ReliabilityBin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibReport {
    pub rows: Vec<CalibRow>,
    pub means: Vec<CalibMeanRow>,
    pub correlations: Vec<CorrelationRow>,
    pub reliability: Vec<ReliabilityRow>,
    pub has_errors: bool,
}

fn technique_row_labels(technique: CalibTechnique) -> Vec<String> {
    match technique {
        CalibTechnique::AhpcAdaptive => vec![
            "ahpc_adaptive_start".to_string(),
            "ahpc_adaptive_end".to_string(),
        ],
        other => vec![other.name().to_string()],
    }
}

struct ComboEval {
    report: MetricReport,
    reliability: Vec<ReliabilityBin>,
}

fn evaluate_map(
    map: &CalibrationMap,
    raw_test: &ScoreMatrix,
    test_labels: &[usize],
    raw_unlabeled: &ScoreMatrix,
    unlabeled_labels: &[usize],
    bins: usize,
) -> Result<ComboEval, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let calibrated_test = map.calibrate_matrix(raw_test).map_err(|e| err(&e))?;
    let auc = auc_ovr_weighted(&calibrated_test, test_labels).map_err(|e| err(&e))?;
    let calibrated_unl = map.calibrate_matrix(raw_unlabeled).map_err(|e| err(&e))?;
    let ece_value = ece(&calibrated_unl, unlabeled_labels, bins).map_err(|e| err(&e))?;
    let n_classes = calibrated_unl.n_classes();
    let histograms = (0..n_classes)
        .map(|c| density_histogram(&calibrated_unl.column(c), bins))
        .collect::<Result<Vec<_>, MetricError>>()
        .map_err(|e| err(&e))?;
    let report = metric_report(auc, ece_value, &histograms, bins).map_err(|e| err(&e))?;
    let reliability =
        reliability_data(&calibrated_unl, unlabeled_labels, bins).map_err(|e| err(&e))?;
    Ok(ComboEval {
        report,
        reliability,
    })
}

#[allow(clippy::type_complexity)]
fn run_calib_combo(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    model_family: &ModelFamily,
    model_index: usize,
    config: &ExperimentConfig,
) -> Vec<(CalibRow, Vec<ReliabilityRow>)> {
    let model_name = model_family.name().to_string();
    let error_rows = |message: String| -> Vec<(CalibRow, Vec<ReliabilityRow>)> {
        config
            .techniques
            .iter()
            .flat_map(|&t| technique_row_labels(t))
            .map(|technique| {
                (
                    CalibRow {
                        model: model_name.clone(),
                        technique,
                        fold,
                        metrics: None,
                        error: Some(message.clone()),
                    },
                    Vec::new(),
                )
            })
            .collect()
    };

    // Shared per-combo stages; a failure here poisons every technique row.
    let prepared = (|| -> Result<_, String> {
        let err = |e: &dyn std::fmt::Display| e.to_string();
        let spec = SplitSpec::rotated(plan.k, fold).map_err(|e| err(&e))?;
        let split = assemble_split(dataset, plan, &spec).map_err(|e| err(&e))?;
        let selection = crate::ingest::select_top_k(&split.train).map_err(|e| err(&e))?;
        let train = selection.apply(&split.train);
        let test = selection.apply(&split.test);
        let calibration = selection.apply(&split.calibration);
        let unlabeled = selection.apply(&split.pool);
        let seed = RngSeed(config.seed)
            .derive(SEED_CALIB_MODEL)
            .derive(fold as u64)
            .derive(model_index as u64);
        let model = fit(&ModelSpec::new(model_family.clone(), seed), &train).map_err(|e| err(&e))?;
        let raw_test = model.predict_scores(&test).map_err(|e| err(&e))?;
        let raw_cal = model.predict_scores(&calibration).map_err(|e| err(&e))?;
        let raw_unl = model.predict_scores(&unlabeled).map_err(|e| err(&e))?;
        let test_labels = split.test.labels().map_err(|e| err(&e))?;
        let cal_labels = split.calibration.labels().map_err(|e| err(&e))?;
        let unl_labels = split.pool.labels().map_err(|e| err(&e))?;
        Ok((raw_test, raw_cal, raw_unl, test_labels, cal_labels, unl_labels))
    })();
    let (raw_test, raw_cal, raw_unl, test_labels, cal_labels, unl_labels) = match prepared {
        Ok(v) => v,
        Err(message) => return error_rows(message),
    };

    let mut rows = Vec::new();
    for &technique in &config.techniques {
        let fitted = fit_technique(
            technique,
            &raw_cal,
            Some(&cal_labels),
            config.bins,
            config.tdigest_compression,
        );
        let labels = technique_row_labels(technique);
        match fitted {
            Err(e) => {
                for technique in labels {
                    rows.push((
                        CalibRow {
                            model: model_name.clone(),
                            technique,
                            fold,
                            metrics: None,
                            error: Some(e.to_string()),
                        },
                        Vec::new(),
                    ));
                }
            }
            Ok(map) => {
                // The adaptive variant is measured before and after
                // absorbing the unlabeled block's predictions.
                let stages: Vec<(String, Result<CalibrationMap, String>)> =
                    if technique == CalibTechnique::AhpcAdaptive {
                        let updated = match &map {
                            CalibrationMap::Ahpc(state) => ahpc_update(state, &raw_unl)
                                .map(CalibrationMap::Ahpc)
                                .map_err(|e| e.to_string()),
                            _ => unreachable!("adaptive technique fits an ahpc state"),
                        };
                        vec![(labels[0].clone(), Ok(map)), (labels[1].clone(), updated)]
                    } else {
                        vec![(labels[0].clone(), Ok(map))]
                    };
                for (label, stage_map) in stages {
                    let outcome = stage_map.and_then(|m| {
                        evaluate_map(
                            &m,
                            &raw_test,
                            &test_labels,
                            &raw_unl,
                            &unl_labels,
                            config.bins,
                        )
                    });
                    match outcome {
                        Ok(eval) => {
                            let reliability = eval
                                .reliability
                                .into_iter()
                                .map(|bin| ReliabilityRow {
                                    model: model_name.clone(),
                                    technique: label.clone(),
                                    fold,
                                    bin,
                                })
                                .collect();
                            rows.push((
                                CalibRow {
                                    model: model_name.clone(),
                                    technique: label,
                                    fold,
                                    metrics: Some(eval.report),
                                    error: None,
                                },
                                reliability,
                            ));
                        }
                        Err(message) => rows.push((
                            CalibRow {
                                model: model_name.clone(),
                                technique: label,
                                fold,
                                metrics: None,
                                error: Some(message),
                            },
                            Vec::new(),
                        )),
                    }
                }
            }
        }
    }
    rows
}

fn mean_metric_reports(reports: &[&MetricReport]) -> Option<MetricReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mean = |get: &dyn Fn(&MetricReport) -> f64| -> f64 {
        reports.iter().map(|r| get(r)).sum::<f64>() / n
    };
    let mut by_reference = Vec::with_capacity(first.by_reference.len());
    for (i, seed_ref) in first.by_reference.iter().enumerate() {
        let pick = move |f: &dyn Fn(&crate::metrics::ReferenceScores) -> f64| {
            reports.iter().map(|r| f(&r.by_reference[i])).sum::<f64>() / n
        };
        by_reference.push(crate::metrics::ReferenceScores {
            kind: seed_ref.kind,
            apcs: crate::metrics::ScoreDecomposition {
                score: pick(&|r| r.apcs.score),
                k_term: pick(&|r| r.apcs.k_term),
                pcs_minus_k: pick(&|r| r.apcs.pcs_minus_k),
            },
            mpcs: crate::metrics::ScoreDecomposition {
                score: pick(&|r| r.mpcs.score),
                k_term: pick(&|r| r.mpcs.k_term),
                pcs_minus_k: pick(&|r| r.mpcs.pcs_minus_k),
            },
        });
    }
    Some(MetricReport {
        auc_roc: mean(&|r| r.auc_roc),
        ece: mean(&|r| r.ece),
        by_reference,
    })
}

/// Fold rows -> per-(model, technique) means plus the ECE correlations over
/// those mean rows.
pub fn aggregate_calib(rows: &[CalibRow]) -> (Vec<CalibMeanRow>, Vec<CorrelationRow>) {
    let mut groups: BTreeMap<(String, String), Vec<&CalibRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.model.clone(), row.technique.clone()))
            .or_default()
            .push(row);
    }
    let mut means = Vec::new();
    for ((model, technique), group) in groups {
        let ok: Vec<&MetricReport> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
        means.push(CalibMeanRow {
            model,
            technique,
            folds: ok.len(),
            metrics: mean_metric_reports(&ok),
        });
    }

    let with_metrics: Vec<&MetricReport> =
        means.iter().filter_map(|m| m.metrics.as_ref()).collect();
    let eces: Vec<f64> = with_metrics.iter().map(|m| m.ece).collect();
    let mut correlations = Vec::new();
    for (i, kind) in ReferenceKind::ALL.iter().enumerate() {
        type Getter = Box<dyn Fn(&MetricReport) -> f64>;
        let columns: [(&str, Getter); 4] = [
            ("apcs", Box::new(move |m| m.by_reference[i].apcs.score)),
            (
                "apcs_minus_k",
                Box::new(move |m| m.by_reference[i].apcs.pcs_minus_k),
            ),
            ("mpcs", Box::new(move |m| m.by_reference[i].mpcs.score)),
            (
                "mpcs_minus_k",
                Box::new(move |m| m.by_reference[i].mpcs.pcs_minus_k),
            ),
        ];
        for (metric, get) in columns {
            let values: Vec<f64> = with_metrics.iter().map(|m| get(m)).collect();
            let value = pearson(&eces, &values).ok();
            correlations.push(CorrelationRow {
                reference: *kind,
                metric: metric.to_string(),
                value,
            });
        }
    }
    (means, correlations)
}

/// Runs the calibration-comparison pipeline over every fold rotation and
/// model: train on the train folds, fit each technique on the calibration
/// fold, update the adaptive map with the unlabeled block, and score
/// everything with test-fold AUC feeding the discrimination terms.
pub fn run_calibration_suite(config: &ExperimentConfig) -> Result<CalibReport, SuiteError> {
    config.validate()?;
    let dataset = config.load_dataset()?;
    let plan = stratified_kfold(&dataset, config.k_folds, RngSeed(config.seed).derive(SEED_FOLDS))?;

    let combos: Vec<(usize, usize)> = (0..config.k_folds)
        .flat_map(|fold| (0..config.models.len()).map(move |m| (fold, m)))
        .collect();
    let nested: Vec<Vec<(CalibRow, Vec<ReliabilityRow>)>> = combos
        .par_iter()
        .map(|&(fold, model_index)| {
            run_calib_combo(
                &dataset,
                &plan,
                fold,
                &config.models[model_index],
                model_index,
                config,
            )
        })
        .collect();

    let mut rows = Vec::new();
    let mut reliability = Vec::new();
    for combo in nested {
        for (row, mut rel) in combo {
            rows.push(row);
            reliability.append(&mut rel);
        }
    }
    rows.sort_by(|a, b| {
        (&a.model, &a.technique, a.fold).cmp(&(&b.model, &b.technique, b.fold))
    });
    reliability.sort_by(|a, b| {
        (&a.model, &a.technique, a.fold, a.bin.bin).cmp(&(
            &b.model,
            &b.technique,
            b.fold,
            b.bin.bin,
        ))
    });
    let has_errors = rows.iter().any(|r| r.error.is_some());
    let (means, correlations) = aggregate_calib(&rows);
    Ok(CalibReport {
        rows,
        means,
        correlations,
        reliability,
        has_errors,
    })
}

// ---------------------------------------------------------------------------
// Active-learning suite
// ---------------------------------------------------------------------------

/// Per-run numbers carried into the aggregate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRunStats {
    pub q1_auc: f64,
    pub q4_auc: f64,
    pub soft_labeled: f64,
    pub soft_labeled_ok: Option<f64>,
    pub model_ok: Option<f64>,
    pub similarity_ok: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRow {
    pub experiment: u8,
    pub threshold: f64,
    pub model: String,
    pub fold: usize,
    pub stats: Option<AlRunStats>,
    pub error: Option<String>,
    /// Full ledger and snapshots, kept for persistence; dropped from the
    /// JSON summary.
    #[serde(skip)]
    pub run: Option<AlRunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlQuartileRow {
    pub experiment: u8,
    pub threshold: f64,
    pub q1_mean: f64,
    pub q4_mean: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlModelRow {
    pub experiment: u8,
    pub threshold: f64,
    pub model: String,
    pub q1_mean: f64,
    pub q1_std: f64,
    pub q4_mean: f64,
    pub q4_std: f64,
    /// Two-sided paired t-test on per-fold Q1 vs Q4.
    pub significant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlSavingsRow {
    pub experiment: u8,
    pub threshold: f64,
    pub soft_labeled: f64,
    pub soft_labeled_ok: Option<f64>,
    pub model_ok: Option<f64>,
    pub similarity_ok: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlReport {
    pub rows: Vec<AlRow>,
    pub quartiles: Vec<AlQuartileRow>,
    pub model_rows: Vec<AlModelRow>,
    pub savings: Vec<AlSavingsRow>,
    /// Two-sided significance level used for the paired t-test rows.
    pub significance_alpha: f64,
    pub has_errors: bool,
}

fn stats_of_run(run: &AlRunResult, oracle: OracleSetting) -> Result<AlRunStats, String> {
    let (q1_auc, q4_auc) = run.quartile_summary().map_err(|e| e.to_string())?;
    let savings = run.savings_report();
    Ok(AlRunStats {
        q1_auc,
        q4_auc,
        soft_labeled: savings.soft_labeled_fraction(),
        soft_labeled_ok: savings.soft_labeled_ok(),
        model_ok: match oracle {
            OracleSetting::Human => None,
            _ => Some(savings.model_ok_fraction()),
        },
        similarity_ok: savings.similarity_ok_fraction(),
    })
}

/// Replays the experiment matrix: every configured (experiment, threshold,
/// model, fold) combination becomes one simulated run with an isolated
/// derived seed.
pub fn run_al_suite(config: &ExperimentConfig) -> Result<AlReport, SuiteError> {
    config.validate()?;
    let dataset = config.load_dataset()?;
    let plan = stratified_kfold(&dataset, config.k_folds, RngSeed(config.seed).derive(SEED_FOLDS))?;

    let mut combos = Vec::new();
    for &experiment in &config.experiments {
        for (t_index, &threshold) in config.thresholds.iter().enumerate() {
            for (m_index, family) in config.models.iter().enumerate() {
                for fold in 0..config.k_folds {
                    combos.push((experiment, t_index, threshold, m_index, family.clone(), fold));
                }
            }
        }
    }

    let rows: Vec<AlRow> = combos
        .par_iter()
        .map(|(experiment, t_index, threshold, m_index, family, fold)| {
            let (setting, query, oracle) =
                experiment_setting(*experiment).expect("validated experiment id");
            let run_seed = RngSeed(config.seed)
                .derive(SEED_AL_RUN)
                .derive(*experiment as u64)
                .derive(*t_index as u64)
                .derive(*m_index as u64)
                .derive(*fold as u64);
            let model_seed = run_seed.derive(0xA11);
            let al_config = AlConfig {
                setting,
                query,
                oracle,
                threshold: *threshold,
                stream_keep_prob: config.stream_keep_prob,
                retrain_every: config.retrain_every,
                model_spec: ModelSpec::new(family.clone(), model_seed),
                calibration: config.in_loop_calibration,
                use_soft_labels_in_training: config.use_soft_labels_in_training,
                bins: config.bins,
                tdigest_compression: config.tdigest_compression,
                seed: run_seed,
            };
            let outcome = SplitSpec::rotated(plan.k, *fold)
                .map_err(|e| e.to_string())
                .and_then(|spec| assemble_split(&dataset, &plan, &spec).map_err(|e| e.to_string()))
                .and_then(|split| run_al(&al_config, &split).map_err(|e| e.to_string()));
            match outcome {
                Ok(run) => match stats_of_run(&run, oracle) {
                    Ok(stats) => AlRow {
                        experiment: *experiment,
                        threshold: *threshold,
                        model: family.name().to_string(),
                        fold: *fold,
                        stats: Some(stats),
                        error: None,
                        run: Some(run),
                    },
                    Err(message) => AlRow {
                        experiment: *experiment,
                        threshold: *threshold,
                        model: family.name().to_string(),
                        fold: *fold,
                        stats: None,
                        error: Some(message),
                        run: Some(run),
                    },
                },
                Err(message) => AlRow {
                    experiment: *experiment,
                    threshold: *threshold,
                    model: family.name().to_string(),
                    fold: *fold,
                    stats: None,
                    error: Some(message),
                    run: None,
                },
            }
        })
        .collect();

    let mut rows = rows;
    rows.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.threshold.total_cmp(&b.threshold))
            .then(a.model.cmp(&b.model))
            .then(a.fold.cmp(&b.fold))
    });
    let has_errors = rows.iter().any(|r| r.error.is_some());
    let (quartiles, model_rows, savings) = aggregate_al(&rows, config.significance_alpha);
    Ok(AlReport {
        rows,
        quartiles,
        model_rows,
        savings,
        significance_alpha: config.significance_alpha,
        has_errors,
    })
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_of_options(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Per-run rows -> the three aggregate tables.
pub fn aggregate_al(
    rows: &[AlRow],
    alpha: f64,
) -> (Vec<AlQuartileRow>, Vec<AlModelRow>, Vec<AlSavingsRow>) {
    let key_of = |r: &AlRow| (r.experiment, (r.threshold * 1e6).round() as u64);
    let mut by_exp: BTreeMap<(u8, u64), Vec<&AlRow>> = BTreeMap::new();
    let mut by_model: BTreeMap<(u8, u64, String), Vec<&AlRow>> = BTreeMap::new();
    for row in rows {
        by_exp.entry(key_of(row)).or_default().push(row);
        let (e, t) = key_of(row);
        by_model.entry((e, t, row.model.clone())).or_default().push(row);
    }

    let mut quartiles = Vec::new();
    let mut savings = Vec::new();
    for ((experiment, _), group) in &by_exp {
        let threshold = group[0].threshold;
        let ok: Vec<&AlRunStats> = group.iter().filter_map(|r| r.stats.as_ref()).collect();
        if ok.is_empty() {
            continue;
        }
        let q1: Vec<f64> = ok.iter().map(|s| s.q1_auc).collect();
        let q4: Vec<f64> = ok.iter().map(|s| s.q4_auc).collect();
        quartiles.push(AlQuartileRow {
            experiment: *experiment,
            threshold,
            q1_mean: mean_and_std(&q1).0,
            q4_mean: mean_and_std(&q4).0,
            runs: ok.len(),
        });
        savings.push(AlSavingsRow {
            experiment: *experiment,
            threshold,
            soft_labeled: ok.iter().map(|s| s.soft_labeled).sum::<f64>() / ok.len() as f64,
            soft_labeled_ok: mean_of_options(ok.iter().map(|s| s.soft_labeled_ok)),
            model_ok: mean_of_options(ok.iter().map(|s| s.model_ok)),
            similarity_ok: mean_of_options(ok.iter().map(|s| s.similarity_ok)),
        });
    }

    let mut model_rows = Vec::new();
    for ((experiment, _, model), group) in &by_model {
        let threshold = group[0].threshold;
        let ok: Vec<&AlRunStats> = group.iter().filter_map(|r| r.stats.as_ref()).collect();
        if ok.is_empty() {
            continue;
        }
        let q1: Vec<f64> = ok.iter().map(|s| s.q1_auc).collect();
        let q4: Vec<f64> = ok.iter().map(|s| s.q4_auc).collect();
        let (q1_mean, q1_std) = mean_and_std(&q1);
        let (q4_mean, q4_std) = mean_and_std(&q4);
        model_rows.push(AlModelRow {
            experiment: *experiment,
            threshold,
            model: model.clone(),
            q1_mean,
            q1_std,
            q4_mean,
            q4_std,
            significant: paired_significance(&q1, &q4, alpha).ok(),
        });
    }
    (quartiles, model_rows, savings)
}

/// Two-sided paired t-test on per-fold value pairs. A zero-variance
/// difference vector is significant exactly when its mean is nonzero.
pub fn paired_significance(a: &[f64], b: &[f64], alpha: f64) -> Result<bool, SuiteError> {
    if a.len() != b.len() {
        return Err(SuiteError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(SuiteError::TooFewSamples(a.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(mean != 0.0);
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| SuiteError::Config(format!("t-distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(p < alpha)
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

// Shortest round-trip representation, so aggregates rebuilt from the CSVs
// reproduce the original numbers bit for bit.
fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_else(|| "NA".to_string())
}

fn threshold_tag(t: f64) -> String {
    format!("p{}", (t * 1e4).round() as u64)
}

fn write_file(path: &Path, content: &str) -> Result<(), SuiteError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(path, content).map_err(|e| io_err(path, e))
}

const CALIB_FOLD_HEADER: &str = "model,technique,fold,auc_roc,ece,k_apcs,k_mpcs,\
pcpccm_apcs,pcpccm_apcs_rest,pcpccm_mpcs,pcpccm_mpcs_rest,\
pcm_apcs,pcm_apcs_rest,pcm_mpcs,pcm_mpcs_rest,\
apcm_apcs,apcm_apcs_rest,apcm_mpcs,apcm_mpcs_rest,error";

fn calib_metric_fields(metrics: &MetricReport) -> String {
    let mut out = format!("{},{}", fmt_f(metrics.auc_roc), fmt_f(metrics.ece));
    let k_apcs = metrics.by_reference[0].apcs.k_term;
    let k_mpcs = metrics.by_reference[0].mpcs.k_term;
    let _ = write!(out, ",{},{}", fmt_f(k_apcs), fmt_f(k_mpcs));
    for scores in &metrics.by_reference {
        let _ = write!(
            out,
            ",{},{},{},{}",
            fmt_f(scores.apcs.score),
            fmt_f(scores.apcs.pcs_minus_k),
            fmt_f(scores.mpcs.score),
            fmt_f(scores.mpcs.pcs_minus_k)
        );
    }
    out
}

const CALIB_EMPTY_METRICS: &str = ",,,,,,,,,,,,,,,,";

/// Writes the calibration suite's CSV tables and JSON summary into
/// `out_dir`: per-fold rows, the two mean tables (additive and
/// multiplicative scores against the three references), the ECE
/// correlations, and the per-bin reliability data.
pub fn write_calib_outputs(report: &CalibReport, out_dir: &Path) -> Result<(), SuiteError> {
    let mut folds = String::from(CALIB_FOLD_HEADER);
    folds.push('\n');
    for row in &report.rows {
        let metric_fields = row
            .metrics
            .as_ref()
            .map(calib_metric_fields)
            .unwrap_or_else(|| CALIB_EMPTY_METRICS.to_string());
        let _ = writeln!(
            folds,
            "{},{},{},{},{}",
            row.model,
            row.technique,
            row.fold,
            metric_fields,
            row.error.clone().unwrap_or_default()
        );
    }
    write_file(&out_dir.join("calib_folds.csv"), &folds)?;

    let mut reliability =
        String::from("model,technique,fold,bin,lo,hi,mean_confidence,accuracy,count\n");
    for row in &report.reliability {
        let _ = writeln!(
            reliability,
            "{},{},{},{},{},{},{},{},{}",
            row.model,
            row.technique,
            row.fold,
            row.bin.bin,
            fmt_f(row.bin.lo),
            fmt_f(row.bin.hi),
            fmt_f(row.bin.mean_confidence),
            fmt_f(row.bin.accuracy),
            row.bin.count
        );
    }
    write_file(&out_dir.join("reliability.csv"), &reliability)?;

    write_calib_aggregates(report, out_dir)
}

/// Writes just the aggregate calibration tables (means, correlations,
/// summary); the `report` subcommand regenerates these without touching
/// the recorded fold rows.
pub fn write_calib_aggregates(report: &CalibReport, out_dir: &Path) -> Result<(), SuiteError> {
    let mut apcs_table = String::from(
        "model,technique,folds,auc_roc,ece,k_apcs,pcpccm_apcs,pcpccm_apcs_rest,pcm_apcs,pcm_apcs_rest,apcm_apcs,apcm_apcs_rest\n",
    );
    let mut mpcs_table = String::from(
        "model,technique,folds,auc_roc,ece,k_mpcs,pcpccm_mpcs,pcpccm_mpcs_rest,pcm_mpcs,pcm_mpcs_rest,apcm_mpcs,apcm_mpcs_rest\n",
    );
    for row in &report.means {
        match &row.metrics {
            Some(m) => {
                let _ = writeln!(
                    apcs_table,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    row.model,
                    row.technique,
                    row.folds,
                    fmt_f(m.auc_roc),
                    fmt_f(m.ece),
                    fmt_f(m.by_reference[0].apcs.k_term),
                    fmt_f(m.by_reference[0].apcs.score),
                    fmt_f(m.by_reference[0].apcs.pcs_minus_k),
                    fmt_f(m.by_reference[1].apcs.score),
                    fmt_f(m.by_reference[1].apcs.pcs_minus_k),
                    fmt_f(m.by_reference[2].apcs.score),
                    fmt_f(m.by_reference[2].apcs.pcs_minus_k),
                );
                let _ = writeln!(
                    mpcs_table,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    row.model,
                    row.technique,
                    row.folds,
                    fmt_f(m.auc_roc),
                    fmt_f(m.ece),
                    fmt_f(m.by_reference[0].mpcs.k_term),
                    fmt_f(m.by_reference[0].mpcs.score),
                    fmt_f(m.by_reference[0].mpcs.pcs_minus_k),
                    fmt_f(m.by_reference[1].mpcs.score),
                    fmt_f(m.by_reference[1].mpcs.pcs_minus_k),
                    fmt_f(m.by_reference[2].mpcs.score),
                    fmt_f(m.by_reference[2].mpcs.pcs_minus_k),
                );
            }
            None => {
                let _ = writeln!(apcs_table, "{},{},0,,,,,,,,,", row.model, row.technique);
                let _ = writeln!(mpcs_table, "{},{},0,,,,,,,,,", row.model, row.technique);
            }
        }
    }
    write_file(&out_dir.join("calib_mean_apcs.csv"), &apcs_table)?;
    write_file(&out_dir.join("calib_mean_mpcs.csv"), &mpcs_table)?;

    let mut correlations = String::from("reference,metric,pearson_with_ece\n");
    for row in &report.correlations {
        let _ = writeln!(
            correlations,
            "{},{},{}",
            row.reference.name(),
            row.metric,
            fmt_opt(row.value)
        );
    }
    write_file(&out_dir.join("calib_correlations.csv"), &correlations)?;

    let summary = serde_json::json!({
        "suite": "calibration",
        "means": report.means,
        "correlations": report.correlations,
        "has_errors": report.has_errors,
    });
    write_file(
        &out_dir.join("calib_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable summary"),
    )
}

const AL_RUNS_HEADER: &str = "experiment,threshold,model,fold,q1_auc,q4_auc,soft_labeled,soft_labeled_ok,model_ok,similarity_ok,error";

/// Writes the AL suite's outputs: one ledger and snapshot CSV per run under
/// `runs/`, the per-run table, the quartile/model/savings aggregates, and a
/// JSON summary.
pub fn write_al_outputs(report: &AlReport, out_dir: &Path) -> Result<(), SuiteError> {
    for row in &report.rows {
        let Some(run) = &row.run else { continue };
        let tag = format!(
            "exp{}_{}_{}_fold{}",
            row.experiment,
            threshold_tag(row.threshold),
            row.model,
            row.fold
        );
        let mut ledger = String::from("step,instance_id,source,label,correct,confidence\n");
        for (step, d) in run.decisions.iter().enumerate() {
            let _ = writeln!(
                ledger,
                "{},{},{},{},{},{}",
                step,
                d.instance_id,
                d.source.name(),
                d.assigned_label.map(|l| l.to_string()).unwrap_or_default(),
                d.correct.map(|c| c.to_string()).unwrap_or_default(),
                fmt_f(d.confidence)
            );
        }
        write_file(&out_dir.join("runs").join(format!("{tag}_ledger.csv")), &ledger)?;

        let mut snapshots = String::from("fraction,auc\n");
        for s in &run.snapshots {
            let _ = writeln!(snapshots, "{},{}", fmt_f(s.fraction), fmt_f(s.auc));
        }
        write_file(
            &out_dir.join("runs").join(format!("{tag}_snapshots.csv")),
            &snapshots,
        )?;
    }

    let mut runs = String::from(AL_RUNS_HEADER);
    runs.push('\n');
    for row in &report.rows {
        let stats = match &row.stats {
            Some(s) => format!(
                "{},{},{},{},{},{}",
                fmt_f(s.q1_auc),
                fmt_f(s.q4_auc),
                fmt_f(s.soft_labeled),
                fmt_opt(s.soft_labeled_ok),
                fmt_opt(s.model_ok),
                fmt_opt(s.similarity_ok)
            ),
            None => ",,,,,".to_string(),
        };
        let _ = writeln!(
            runs,
            "{},{},{},{},{},{}",
            row.experiment,
            row.threshold,
            row.model,
            row.fold,
            stats,
            row.error.clone().unwrap_or_default()
        );
    }
    write_file(&out_dir.join("al_runs.csv"), &runs)?;
    write_al_aggregates(report, out_dir)
}

/// Writes just the aggregate AL tables (quartiles, per-model, savings,
/// summary).
pub fn write_al_aggregates(report: &AlReport, out_dir: &Path) -> Result<(), SuiteError> {
    write_aggregate_al_tables(report, out_dir)?;
    let summary = serde_json::json!({
        "suite": "active_learning",
        "significance_test": "two-sided paired t-test on per-fold Q1 vs Q4",
        "significance_alpha": report.significance_alpha,
        "quartiles": report.quartiles,
        "model_rows": report.model_rows,
        "savings": report.savings,
        "has_errors": report.has_errors,
    });
    write_file(
        &out_dir.join("al_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable summary"),
    )
}

fn write_aggregate_al_tables(report: &AlReport, out_dir: &Path) -> Result<(), SuiteError> {
    let mut q1q4 = String::from("experiment,threshold,q1_mean,q4_mean,runs\n");
    for row in &report.quartiles {
        let _ = writeln!(
            q1q4,
            "{},{},{},{},{}",
            row.experiment,
            row.threshold,
            fmt_f(row.q1_mean),
            fmt_f(row.q4_mean),
            row.runs
        );
    }
    write_file(&out_dir.join("al_q1q4.csv"), &q1q4)?;

    let mut models =
        String::from("experiment,threshold,model,q1_mean,q1_std,q4_mean,q4_std,significant\n");
    for row in &report.model_rows {
        let _ = writeln!(
            models,
            "{},{},{},{},{},{},{},{}",
            row.experiment,
            row.threshold,
            row.model,
            fmt_f(row.q1_mean),
            fmt_f(row.q1_std),
            fmt_f(row.q4_mean),
            fmt_f(row.q4_std),
            row.significant
                .map(|s| if s { "yes" } else { "no" }.to_string())
                .unwrap_or_else(|| "NA".to_string())
        );
    }
    write_file(&out_dir.join("al_models.csv"), &models)?;

    let mut savings =
        String::from("experiment,threshold,soft_labeled,soft_labeled_ok,model_ok,similarity_ok\n");
    for row in &report.savings {
        let _ = writeln!(
            savings,
            "{},{},{},{},{},{}",
            row.experiment,
            row.threshold,
            fmt_f(row.soft_labeled),
            fmt_opt(row.soft_labeled_ok),
            fmt_opt(row.model_ok),
            fmt_opt(row.similarity_ok)
        );
    }
    write_file(&out_dir.join("al_savings.csv"), &savings)
}

// ---------------------------------------------------------------------------
// Report regeneration from persisted CSVs
// ---------------------------------------------------------------------------

fn parse_f(field: &str, path: &Path, line: usize) -> Result<f64, SuiteError> {
    field.parse::<f64>().map_err(|_| SuiteError::ReportParse {
        path: path.display().to_string(),
        line,
        message: format!("bad float `{field}`"),
    })
}

fn parse_opt_f(field: &str, path: &Path, line: usize) -> Result<Option<f64>, SuiteError> {
    if field == "NA" || field.is_empty() {
        Ok(None)
    } else {
        parse_f(field, path, line).map(Some)
    }
}

/// Reads `calib_folds.csv` back into fold rows.
pub fn read_calib_folds(path: &Path) -> Result<Vec<CalibRow>, SuiteError> {
    let content = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 20 {
            return Err(SuiteError::ReportParse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("expected 20 columns, got {}", fields.len()),
            });
        }
        let error = fields[19];
        let metrics = if error.is_empty() && !fields[3].is_empty() {
            let auc_roc = parse_f(fields[3], path, line_no)?;
            let ece = parse_f(fields[4], path, line_no)?;
            let k_apcs = parse_f(fields[5], path, line_no)?;
            let k_mpcs = parse_f(fields[6], path, line_no)?;
            let mut by_reference = Vec::with_capacity(3);
            for (r, kind) in ReferenceKind::ALL.iter().enumerate() {
                let base = 7 + r * 4;
                by_reference.push(crate::metrics::ReferenceScores {
                    kind: *kind,
                    apcs: crate::metrics::ScoreDecomposition {
                        score: parse_f(fields[base], path, line_no)?,
                        k_term: k_apcs,
                        pcs_minus_k: parse_f(fields[base + 1], path, line_no)?,
                    },
                    mpcs: crate::metrics::ScoreDecomposition {
                        score: parse_f(fields[base + 2], path, line_no)?,
                        k_term: k_mpcs,
                        pcs_minus_k: parse_f(fields[base + 3], path, line_no)?,
                    },
                });
            }
            Some(MetricReport {
                auc_roc,
                ece,
                by_reference,
            })
        } else {
            None
        };
        rows.push(CalibRow {
            model: fields[0].to_string(),
            technique: fields[1].to_string(),
            fold: fields[2].parse().map_err(|_| SuiteError::ReportParse {
                path: path.display().to_string(),
                line: line_no,
                message: "bad fold index".to_string(),
            })?,
            metrics,
            error: if error.is_empty() {
                None
            } else {
                Some(error.to_string())
            },
        });
    }
    Ok(rows)
}

/// Reads `al_runs.csv` back into per-run rows (without ledgers).
pub fn read_al_runs(path: &Path) -> Result<Vec<AlRow>, SuiteError> {
    let content = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(SuiteError::ReportParse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("expected 11 columns, got {}", fields.len()),
            });
        }
        let error = fields[10];
        let stats = if error.is_empty() && !fields[4].is_empty() {
            Some(AlRunStats {
                q1_auc: parse_f(fields[4], path, line_no)?,
                q4_auc: parse_f(fields[5], path, line_no)?,
                soft_labeled: parse_f(fields[6], path, line_no)?,
                soft_labeled_ok: parse_opt_f(fields[7], path, line_no)?,
                model_ok: parse_opt_f(fields[8], path, line_no)?,
                similarity_ok: parse_opt_f(fields[9], path, line_no)?,
            })
        } else {
            None
        };
        rows.push(AlRow {
            experiment: fields[0].parse().map_err(|_| SuiteError::ReportParse {
                path: path.display().to_string(),
                line: line_no,
                message: "bad experiment id".to_string(),
            })?,
            threshold: parse_f(fields[1], path, line_no)?,
            model: fields[2].to_string(),
            fold: fields[3].parse().map_err(|_| SuiteError::ReportParse {
                path: path.display().to_string(),
                line: line_no,
                message: "bad fold index".to_string(),
            })?,
            stats,
            error: if error.is_empty() {
                None
            } else {
                Some(error.to_string())
            },
            run: None,
        });
    }
    Ok(rows)
}

/// Rebuilds every aggregate table found in `out_dir` from the persisted
/// per-fold/per-run CSVs; recorded fold rows, ledgers, and reliability
/// data are left untouched. Returns the suites that were regenerated.
pub fn rebuild_reports(out_dir: &Path, alpha: f64) -> Result<Vec<String>, SuiteError> {
    let mut rebuilt = Vec::new();
    let calib_path = out_dir.join("calib_folds.csv");
    if calib_path.exists() {
        let rows = read_calib_folds(&calib_path)?;
        let (means, correlations) = aggregate_calib(&rows);
        let has_errors = rows.iter().any(|r| r.error.is_some());
        let report = CalibReport {
            rows,
            means,
            correlations,
            reliability: Vec::new(),
            has_errors,
        };
        write_calib_aggregates(&report, out_dir)?;
        rebuilt.push("calibration".to_string());
    }
    let al_path = out_dir.join("al_runs.csv");
    if al_path.exists() {
        let rows = read_al_runs(&al_path)?;
        let (quartiles, model_rows, savings) = aggregate_al(&rows, alpha);
        let has_errors = rows.iter().any(|r| r.error.is_some());
        let report = AlReport {
            rows,
            quartiles,
            model_rows,
            savings,
            significance_alpha: alpha,
            has_errors,
        };
        write_al_aggregates(&report, out_dir)?;
        rebuilt.push("active_learning".to_string());
    }
    Ok(rebuilt)
}
