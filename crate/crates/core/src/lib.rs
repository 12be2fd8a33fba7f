//! Classifier-agnostic probability calibration and active-learning
//! simulation.
//!
//! The crate fits and compares five calibration techniques — including a
//! histogram-based one that needs no ground truth — scores calibration
//! quality through Wasserstein distances to ideal reference histograms,
//! and replays pool/stream active-learning scenarios with human and
//! machine oracles over stratified cross-validation splits.
//!
//! Module map:
//! - [`data`]: domain types, seeded RNG, stratified folds, split geometry
//! - [`ingest`]: CSV loading, synthetic data, mutual-information selection
//! - [`scores`]: simplex-valued score vectors and matrices
//! - [`classifiers`]: naive Bayes, kNN, CART, linear, and MLP models
//! - [`tdigest`]: the quantile sketch backing the label-free calibration
//! - [`calibration`]: the five calibration maps
//! - [`metrics`]: AUC ROC, ECE, histograms, Wasserstein, score metrics
//! - [`active_learning`]: pool/stream simulation with oracle routing
//! - [`suite`]: experiment harness, aggregate tables, file outputs

pub mod active_learning;
pub mod calibration;
pub mod classifiers;
pub mod data;
pub mod ingest;
pub mod metrics;
pub mod scores;
pub mod suite;
pub mod tdigest;

pub use active_learning::{
    run as run_active_learning, AlConfig, AlError, AlRunResult, AlSetting, AucSnapshot,
    DecisionSource, OracleDecision, OracleSetting, QueryStrategy, SoftLabelStats,
};
pub use calibration::{
    ahpc_update, fit_ahpc, fit_histogram_gt, fit_platt, fit_technique, fit_temperature, AhpcMode,
    AhpcState, CalibTechnique, CalibrationError, CalibrationMap, HistogramGtMap, PlattMap,
    TemperatureMap,
};
pub use classifiers::{fit, ModelError, ModelFamily, ModelSpec, TrainedModel};
pub use data::{
    assemble_split, stratified_kfold, DataError, Dataset, FoldPlan, Instance, RngSeed, Split,
    SplitSpec,
};
pub use ingest::{
    gen_synthetic, load_csv, mutual_information, select_top_k, write_csv, FeatureSelection,
    IngestError, SyntheticConfig,
};
pub use metrics::{
    apcs, auc_binary, auc_ovr_weighted, density_histogram, ece, metric_report, mpcs, pearson,
    reference_histogram, wasserstein1, Histogram, MetricError, MetricReport, ReferenceKind,
    ScoreDecomposition,
};
pub use scores::{ScoreError, ScoreMatrix, ScoreVector};
pub use suite::{
    paired_significance, rebuild_reports, run_al_suite, run_calibration_suite, write_al_outputs,
    write_calib_outputs, AlReport, CalibReport, DataSource, ExperimentConfig, SuiteError,
    SyntheticSpec,
};
pub use tdigest::{DigestError, TDigest};
