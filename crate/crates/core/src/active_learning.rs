//! Simulated active-learning runs: pool-based and stream-based loops,
//! random and highest-uncertainty querying, three oracle settings with
//! soft-labeling thresholds, quartile learning curves, and labeling-savings
//! accounting.
//!
//! Ground-truth labels of the pool stay hidden from the learner: the loop
//! scores bare feature vectors and reads the truth only inside oracle
//! simulation and correctness bookkeeping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{fit_technique, CalibTechnique, CalibrationError, CalibrationMap};
use crate::classifiers::{fit, ModelError, ModelSpec, TrainedModel};
use crate::data::{DataError, Dataset, Instance, RngSeed, Split};
use crate::ingest::{select_top_k, FeatureSelection, IngestError};
use crate::metrics::{auc_ovr_weighted, MetricError};
use crate::scores::ScoreVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlError {
    #[error("pool is empty")]
    EmptyPool,
    #[error("config is for the {expected} setting, not {got}")]
    SettingMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("no labeled exemplar available for class {0}")]
    MissingClassExemplar(usize),
    #[error("pool instance {id} has no ground-truth label for oracle simulation")]
    UnlabeledPoolInstance { id: u64 },
    #[error("run recorded no snapshots in one of the quartiles")]
    InsufficientSnapshots,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlSetting {
    Pool,
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    Random,
    /// Select the instance whose highest class score is lowest.
    Uncertainty,
}

/// The three oracle settings: a human annotator alone, the model
/// soft-labeling its confident predictions, and the model requiring a
/// second machine opinion (nearest labeled exemplar) before soft-labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSetting {
    /// "A": every label comes from the (ideal) human annotator.
    Human,
    /// "B": confident predictions become soft labels; the rest go to the
    /// human.
    Machine,
    /// "C": confident predictions become soft labels only when the
    /// similarity oracle agrees; mismatches go to manual revision.
    MachineConsensus,
}

impl OracleSetting {
    pub fn name(&self) -> &'static str {
        match self {
            OracleSetting::Human => "human",
            OracleSetting::Machine => "machine",
            OracleSetting::MachineConsensus => "machine_consensus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub setting: AlSetting,
    pub query: QueryStrategy,
    pub oracle: OracleSetting,
    /// Confidence threshold for machine labeling (and for stream
    /// discarding under oracle A).
    pub threshold: f64,
    /// Keep probability for random stream sampling.
    pub stream_keep_prob: f64,
    /// Retrain after this many acquisitions; quartile boundaries force a
    /// retrain regardless.
    pub retrain_every: usize,
    pub model_spec: ModelSpec,
    /// Technique used for the in-loop confidence scores.
    pub calibration: CalibTechnique,
    /// Whether machine-assigned labels join the training set or are only
    /// counted as saved work.
    pub use_soft_labels_in_training: bool,
    /// Histogram bin count for the in-loop calibration map.
    pub bins: usize,
    pub tdigest_compression: f64,
    pub seed: RngSeed,
}

impl AlConfig {
    pub fn new(
        setting: AlSetting,
        query: QueryStrategy,
        oracle: OracleSetting,
        model_spec: ModelSpec,
        seed: RngSeed,
    ) -> Self {
        Self {
            setting,
            query,
            oracle,
            threshold: 0.95,
            stream_keep_prob: 0.5,
            retrain_every: 1,
            model_spec,
            calibration: CalibTechnique::Platt,
            use_soft_labels_in_training: true,
            bins: 10,
            tdigest_compression: 100.0,
            seed,
        }
    }
}

/// Where a pool/stream instance's label (or discard) came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Human,
    MachineModel,
    MachineUnanimous,
    Discarded,
}

impl DecisionSource {
    pub fn name(&self) -> &'static str {
        match self {
            DecisionSource::Human => "human",
            DecisionSource::MachineModel => "machine_model",
            DecisionSource::MachineUnanimous => "machine_unanimous",
            DecisionSource::Discarded => "discarded",
        }
    }

    pub fn is_soft(&self) -> bool {
        matches!(
            self,
            DecisionSource::MachineModel | DecisionSource::MachineUnanimous
        )
    }
}

/// One ledger entry: what happened to one presented instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDecision {
    pub instance_id: u64,
    pub source: DecisionSource,
    pub assigned_label: Option<usize>,
    /// Assigned label vs held ground truth; humans are ideal annotators so
    /// theirs is always true. Discards carry no verdict.
    pub correct: Option<bool>,
    /// Calibrated confidence at decision time.
    pub confidence: f64,
}

/// Test AUC recorded at a retrain point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSnapshot {
    /// Fraction of the pool consumed when the snapshot was taken.
    pub fraction: f64,
    pub auc: f64,
    /// Features kept by the selection re-run at this retrain.
    pub n_features: usize,
}

/// Labeling-savings accounting over one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelStats {
    pub total: usize,
    pub soft_labeled: usize,
    pub soft_correct: usize,
    /// Instances where the model was confident and its argmax matched the
    /// truth, regardless of final routing.
    pub model_confident_correct: usize,
    /// Oracle C only: confident instances where the similarity oracle's
    /// class matched the truth.
    pub similarity_confident_correct: Option<usize>,
}

impl SoftLabelStats {
    pub fn soft_labeled_fraction(&self) -> f64 {
        self.soft_labeled as f64 / self.total.max(1) as f64
    }

    /// Precision of soft labels; `None` when nothing was soft-labeled.
    pub fn soft_labeled_ok(&self) -> Option<f64> {
        if self.soft_labeled == 0 {
            None
        } else {
            Some(self.soft_correct as f64 / self.soft_labeled as f64)
        }
    }

    pub fn model_ok_fraction(&self) -> f64 {
        self.model_confident_correct as f64 / self.total.max(1) as f64
    }

    pub fn similarity_ok_fraction(&self) -> Option<f64> {
        self.similarity_confident_correct
            .map(|c| c as f64 / self.total.max(1) as f64)
    }
}

/// Time-indexed ledger of one active-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRunResult {
    pub decisions: Vec<OracleDecision>,
    pub snapshots: Vec<AucSnapshot>,
    pub savings: SoftLabelStats,
}

impl AlRunResult {
    /// Mean snapshot AUC inside the first quartile (`fraction <= 0.25`)
    /// and the last one (`fraction > 0.75`).
    pub fn quartile_summary(&self) -> Result<(f64, f64), AlError> {
        let q1: Vec<f64> = self
            .snapshots
            .iter()
            .filter(|s| s.fraction <= 0.25)
            .map(|s| s.auc)
            .collect();
        let q4: Vec<f64> = self
            .snapshots
            .iter()
            .filter(|s| s.fraction > 0.75)
            .map(|s| s.auc)
            .collect();
        if q1.is_empty() || q4.is_empty() {
            return Err(AlError::InsufficientSnapshots);
        }
        Ok((
            q1.iter().sum::<f64>() / q1.len() as f64,
            q4.iter().sum::<f64>() / q4.len() as f64,
        ))
    }

    pub fn savings_report(&self) -> SoftLabelStats {
        self.savings
    }
}

/// Distance used by the similarity oracle; pluggable so an image-domain
/// measure can replace the feature-space default.
pub trait FeatureDistance {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

/// Euclidean distance over the (selected) feature space.
#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanDistance;

impl FeatureDistance for EuclideanDistance {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        crate::classifiers::squared_distance(a, b).sqrt()
    }
}

/// Picks one random labeled exemplar per class and returns the class of
/// the exemplar nearest to the instance; ties break toward the lowest
/// class index.
pub fn similarity_oracle(
    instance: &Instance,
    labeled_pool: &Dataset,
    seed: RngSeed,
) -> Result<usize, AlError> {
    similarity_oracle_with(
        instance,
        labeled_pool,
        &EuclideanDistance,
        &mut seed.rng(),
    )
}

pub fn similarity_oracle_with<D: FeatureDistance, R: Rng>(
    instance: &Instance,
    labeled_pool: &Dataset,
    distance: &D,
    rng: &mut R,
) -> Result<usize, AlError> {
    let n_classes = labeled_pool.n_classes();
    let mut best: Option<(f64, usize)> = None;
    for class in 0..n_classes {
        let members: Vec<&Instance> = labeled_pool
            .iter()
            .filter(|i| i.label == Some(class))
            .collect();
        if members.is_empty() {
            return Err(AlError::MissingClassExemplar(class));
        }
        let exemplar = members[rng.random_range(0..members.len())];
        let d = distance.distance(&instance.features, &exemplar.features);
        let better = match best {
            None => true,
            Some((best_d, _)) => d < best_d,
        };
        if better {
            best = Some((d, class));
        }
    }
    Ok(best.expect("n_classes >= 2").1)
}

struct LoopState {
    selection: FeatureSelection,
    model: TrainedModel,
    calibration_map: CalibrationMap,
}

fn retrain(labeled: &Dataset, calibration_set: &Dataset, config: &AlConfig) -> Result<LoopState, AlError> {
    let selection = select_top_k(labeled)?;
    let train_projected = selection.apply(labeled);
    let model = fit(&config.model_spec, &train_projected)?;
    let cal_projected = selection.apply(calibration_set);
    let cal_scores = model.predict_scores(&cal_projected)?;
    let cal_labels = calibration_set.labels()?;
    let calibration_map = fit_technique(
        config.calibration,
        &cal_scores,
        Some(&cal_labels),
        config.bins,
        config.tdigest_compression,
    )?;
    Ok(LoopState {
        selection,
        model,
        calibration_map,
    })
}

impl LoopState {
    fn score_features(&self, features: &[f64]) -> Result<ScoreVector, AlError> {
        let projected: Vec<f64> = self
            .selection
            .selected_indices
            .iter()
            .map(|&j| features[j])
            .collect();
        let raw = self.model.predict_one(&projected)?;
        Ok(self.calibration_map.calibrate(&raw)?)
    }

    fn test_auc(&self, test: &Dataset) -> Result<f64, AlError> {
        let projected = self.selection.apply(test);
        let raw = self.model.predict_scores(&projected)?;
        let calibrated = self.calibration_map.calibrate_matrix(&raw)?;
        Ok(auc_ovr_weighted(&calibrated, &test.labels()?)?)
    }
}

struct RunAccounting {
    decisions: Vec<OracleDecision>,
    snapshots: Vec<AucSnapshot>,
    soft_labeled: usize,
    soft_correct: usize,
    model_confident_correct: usize,
    similarity_confident_correct: usize,
}

impl RunAccounting {
    fn new(capacity: usize) -> Self {
        Self {
            decisions: Vec::with_capacity(capacity),
            snapshots: Vec::new(),
            soft_labeled: 0,
            soft_correct: 0,
            model_confident_correct: 0,
            similarity_confident_correct: 0,
        }
    }

    fn record(&mut self, decision: OracleDecision) {
        if decision.source.is_soft() {
            self.soft_labeled += 1;
            if decision.correct == Some(true) {
                self.soft_correct += 1;
            }
        }
        self.decisions.push(decision);
    }

    fn finish(self, total: usize, oracle: OracleSetting) -> AlRunResult {
        let savings = SoftLabelStats {
            total,
            soft_labeled: self.soft_labeled,
            soft_correct: self.soft_correct,
            model_confident_correct: self.model_confident_correct,
            similarity_confident_correct: match oracle {
                OracleSetting::MachineConsensus => Some(self.similarity_confident_correct),
                _ => None,
            },
        };
        AlRunResult {
            decisions: self.decisions,
            snapshots: self.snapshots,
            savings,
        }
    }
}

fn quartile_marks(total: usize) -> [usize; 4] {
    let mark = |q: f64| ((total as f64 * q).ceil() as usize).clamp(1, total);
    [mark(0.25), mark(0.5), mark(0.75), total]
}

fn truth_of(instance: &Instance) -> Result<usize, AlError> {
    instance.label.ok_or(AlError::UnlabeledPoolInstance {
        id: instance.id,
    })
}

/// Routes one confident-or-not instance through the configured oracle.
/// Machine-oracle bookkeeping (confident-and-correct counts) only runs
/// when a machine oracle is actually in play.
#[allow(clippy::too_many_arguments)]
fn route_to_oracle<R: Rng>(
    config: &AlConfig,
    state: &LoopState,
    instance: &Instance,
    confidence: f64,
    predicted: usize,
    truth: usize,
    labeled: &[Instance],
    n_classes: usize,
    discard_when_confident: bool,
    rng: &mut R,
    accounting: &mut RunAccounting,
) -> Result<OracleDecision, AlError> {
    let confident = confidence >= config.threshold;
    let human = |conf: f64| OracleDecision {
        instance_id: instance.id,
        source: DecisionSource::Human,
        assigned_label: Some(truth),
        correct: Some(true),
        confidence: conf,
    };

    if !confident {
        return Ok(human(confidence));
    }
    if config.oracle != OracleSetting::Human && predicted == truth {
        accounting.model_confident_correct += 1;
    }

    Ok(match config.oracle {
        OracleSetting::Human => {
            if discard_when_confident {
                OracleDecision {
                    instance_id: instance.id,
                    source: DecisionSource::Discarded,
                    assigned_label: None,
                    correct: None,
                    confidence,
                }
            } else {
                human(confidence)
            }
        }
        OracleSetting::Machine => OracleDecision {
            instance_id: instance.id,
            source: DecisionSource::MachineModel,
            assigned_label: Some(predicted),
            correct: Some(predicted == truth),
            confidence,
        },
        OracleSetting::MachineConsensus => {
            let projected = Instance::new(
                instance.id,
                state
                    .selection
                    .selected_indices
                    .iter()
                    .map(|&j| instance.features[j])
                    .collect(),
                instance.label,
            );
            let labeled_projected =
                state.selection.apply(&Dataset::new(labeled.to_vec(), n_classes)?);
            let similar =
                similarity_oracle_with(&projected, &labeled_projected, &EuclideanDistance, rng)?;
            if similar == truth {
                accounting.similarity_confident_correct += 1;
            }
            if similar == predicted {
                OracleDecision {
                    instance_id: instance.id,
                    source: DecisionSource::MachineUnanimous,
                    assigned_label: Some(predicted),
                    correct: Some(predicted == truth),
                    confidence,
                }
            } else {
                // Class mismatch between the two machine oracles: manual
                // revision.
                human(confidence)
            }
        }
    })
}

fn push_labeled(labeled: &mut Vec<Instance>, instance: &Instance, label: usize) {
    labeled.push(Instance::new(
        instance.id,
        instance.features.clone(),
        Some(label),
    ));
}

/// Pool-based run: instances are drawn from the pool until exhaustion,
/// every one of them ends up labeled (nothing is discarded in pool mode),
/// and the model retrains on the configured cadence plus at every pool
/// quartile boundary.
pub fn run_pool(config: &AlConfig, split: &Split) -> Result<AlRunResult, AlError> {
    if config.setting != AlSetting::Pool {
        return Err(AlError::SettingMismatch {
            expected: "stream",
            got: "pool",
        });
    }
    if split.pool.is_empty() {
        return Err(AlError::EmptyPool);
    }
    let pool: Vec<&Instance> = split.pool.instances().iter().collect();
    for inst in &pool {
        truth_of(inst)?;
    }
    let total = pool.len();
    let marks = quartile_marks(total);
    let mut labeled: Vec<Instance> = split.train.instances().to_vec();
    let mut rng_query = config.seed.derive(1).rng();
    let mut rng_oracle = config.seed.derive(2).rng();

    let mut accounting = RunAccounting::new(total);
    let mut state = retrain(&Dataset::new(labeled.clone(), split.train.n_classes())?, &split.calibration, config)?;
    accounting.snapshots.push(AucSnapshot {
        fraction: 0.0,
        auc: state.test_auc(&split.test)?,
        n_features: state.selection.k(),
    });

    let mut remaining: Vec<usize> = (0..total).collect();
    let mut consumed = 0usize;
    while !remaining.is_empty() {
        // Score the remaining pool with the current calibrated model.
        let scored: Vec<(usize, ScoreVector)> = remaining
            .iter()
            .map(|&idx| {
                state
                    .score_features(&pool[idx].features)
                    .map(|s| (idx, s))
            })
            .collect::<Result<_, _>>()?;
        let chosen = match config.query {
            QueryStrategy::Random => rng_query.random_range(0..scored.len()),
            QueryStrategy::Uncertainty => {
                // Lowest max-class score wins; ties keep the earliest
                // remaining position (lowest instance position).
                let mut best = 0;
                for (i, (_, scores)) in scored.iter().enumerate().skip(1) {
                    if scores.max_score() < scored[best].1.max_score() {
                        best = i;
                    }
                }
                best
            }
        };
        let (pool_idx, scores) = &scored[chosen];
        let instance = pool[*pool_idx];
        remaining.retain(|&i| i != *pool_idx);
        consumed += 1;

        let confidence = scores.max_score();
        let predicted = scores.predicted_class();
        let truth = truth_of(instance)?;
        let decision = route_to_oracle(
            config,
            &state,
            instance,
            confidence,
            predicted,
            truth,
            &labeled,
            split.train.n_classes(),
            false,
            &mut rng_oracle,
            &mut accounting,
        )?;
        let adopt = match decision.source {
            DecisionSource::Human => decision.assigned_label,
            DecisionSource::MachineModel | DecisionSource::MachineUnanimous => {
                if config.use_soft_labels_in_training {
                    decision.assigned_label
                } else {
                    None
                }
            }
            DecisionSource::Discarded => None,
        };
        if let Some(label) = adopt {
            push_labeled(&mut labeled, instance, label);
        }
        accounting.record(decision);

        let at_quartile = marks.contains(&consumed);
        if consumed.is_multiple_of(config.retrain_every) || at_quartile || remaining.is_empty() {
            state = retrain(
                &Dataset::new(labeled.clone(), split.train.n_classes())?,
                &split.calibration,
                config,
            )?;
            accounting.snapshots.push(AucSnapshot {
                fraction: consumed as f64 / total as f64,
                auc: state.test_auc(&split.test)?,
                n_features: state.selection.k(),
            });
        }
    }

    Ok(accounting.finish(total, config.oracle))
}

/// Stream-based run: a single pass over the pool in seeded arrival order.
/// Random querying keeps an instance with the configured probability and
/// hands it to the human; uncertainty querying routes low-confidence
/// instances to the oracles and discards (A) or soft-labels (B/C) the
/// confident ones.
pub fn run_stream(config: &AlConfig, split: &Split) -> Result<AlRunResult, AlError> {
    if config.setting != AlSetting::Stream {
        return Err(AlError::SettingMismatch {
            expected: "pool",
            got: "stream",
        });
    }
    if split.pool.is_empty() {
        return Err(AlError::EmptyPool);
    }
    let mut arrival: Vec<&Instance> = split.pool.instances().iter().collect();
    for inst in &arrival {
        truth_of(inst)?;
    }
    arrival.shuffle(&mut config.seed.derive(0).rng());
    let total = arrival.len();
    let marks = quartile_marks(total);
    let mut labeled: Vec<Instance> = split.train.instances().to_vec();
    let mut rng_query = config.seed.derive(1).rng();
    let mut rng_oracle = config.seed.derive(2).rng();

    let mut accounting = RunAccounting::new(total);
    let mut state = retrain(&Dataset::new(labeled.clone(), split.train.n_classes())?, &split.calibration, config)?;
    accounting.snapshots.push(AucSnapshot {
        fraction: 0.0,
        auc: state.test_auc(&split.test)?,
        n_features: state.selection.k(),
    });

    let mut acquisitions_since_retrain = 0usize;
    for (step, instance) in arrival.iter().enumerate() {
        let consumed = step + 1;
        let scores = state.score_features(&instance.features)?;
        let confidence = scores.max_score();
        let predicted = scores.predicted_class();
        let truth = truth_of(instance)?;

        let decision = match config.query {
            QueryStrategy::Random => {
                if rng_query.random_bool(config.stream_keep_prob) {
                    OracleDecision {
                        instance_id: instance.id,
                        source: DecisionSource::Human,
                        assigned_label: Some(truth),
                        correct: Some(true),
                        confidence,
                    }
                } else {
                    OracleDecision {
                        instance_id: instance.id,
                        source: DecisionSource::Discarded,
                        assigned_label: None,
                        correct: None,
                        confidence,
                    }
                }
            }
            QueryStrategy::Uncertainty => route_to_oracle(
                config,
                &state,
                instance,
                confidence,
                predicted,
                truth,
                &labeled,
                split.train.n_classes(),
                true,
                &mut rng_oracle,
                &mut accounting,
            )?,
        };

        let adopt = match decision.source {
            DecisionSource::Human => decision.assigned_label,
            DecisionSource::MachineModel | DecisionSource::MachineUnanimous => {
                if config.use_soft_labels_in_training {
                    decision.assigned_label
                } else {
                    None
                }
            }
            DecisionSource::Discarded => None,
        };
        let acquired = adopt.is_some();
        if let Some(label) = adopt {
            push_labeled(&mut labeled, instance, label);
        }
        accounting.record(decision);

        if acquired {
            acquisitions_since_retrain += 1;
        }
        let at_quartile = marks.contains(&consumed);
        if (acquired && acquisitions_since_retrain >= config.retrain_every) || at_quartile {
            acquisitions_since_retrain = 0;
            state = retrain(
                &Dataset::new(labeled.clone(), split.train.n_classes())?,
                &split.calibration,
                config,
            )?;
            accounting.snapshots.push(AucSnapshot {
                fraction: consumed as f64 / total as f64,
                auc: state.test_auc(&split.test)?,
                n_features: state.selection.k(),
            });
        }
    }

    Ok(accounting.finish(total, config.oracle))
}

/// Dispatches on the configured setting.
pub fn run(config: &AlConfig, split: &Split) -> Result<AlRunResult, AlError> {
    match config.setting {
        AlSetting::Pool => run_pool(config, split),
        AlSetting::Stream => run_stream(config, split),
    }
}
