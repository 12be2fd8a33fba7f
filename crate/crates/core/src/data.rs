//! Domain types, deterministic randomness, stratified fold planning, and
//! the four-way split geometry used by every experiment.
//!
//! All types here are immutable after construction and safe to share across
//! threads. Every randomized operation in the crate takes an explicit
//! [`RngSeed`] so that runs reproduce bit-for-bit.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("duplicate instance id {0}")]
    DuplicateId(u64),
    #[error("a dataset needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("instance {id} has label {label}, but the dataset declares {n_classes} classes")]
    LabelOutOfRange {
        id: u64,
        label: usize,
        n_classes: usize,
    },
    #[error("instance {id} has {got} features, expected {expected}")]
    DimensionMismatch { id: u64, expected: usize, got: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("class {class} has {count} instances, fewer than the {k} folds requested")]
    ClassTooSmall { class: usize, count: usize, k: usize },
    #[error("instance {id} is unlabeled")]
    UnlabeledInstance { id: u64 },
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("fold plan covers {expected} instances, dataset has {got}")]
    PlanLengthMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Seed for all randomized operations. Same seed, same results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    /// Derives an independent child seed. Used to give each (fold,
    /// experiment, model) combination an isolated random stream.
    pub fn derive(self, salt: u64) -> Self {
        // splitmix64 finalizer over the salted seed; deterministic and
        // well-dispersed for nearby salts.
        let mut z = self
            .0
            .wrapping_add(salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
            .wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Self(z ^ (z >> 31))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// A single feature vector with an optional class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

impl Instance {
    pub fn new(id: u64, features: Vec<f64>, label: Option<usize>) -> Self {
        Self {
            id,
            features,
            label,
        }
    }
}

/// An ordered collection of instances with a declared class count.
///
/// The class count comes from the dataset header rather than the observed
/// labels, so an empty class is a detectable error instead of a silent
/// shrinking of the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    instances: Vec<Instance>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(instances: Vec<Instance>, n_classes: usize) -> Result<Self, DataError> {
        if n_classes < 2 {
            return Err(DataError::TooFewClasses(n_classes));
        }
        let mut seen = HashSet::with_capacity(instances.len());
        let dim = instances.first().map(|i| i.features.len()).unwrap_or(0);
        for inst in &instances {
            if !seen.insert(inst.id) {
                return Err(DataError::DuplicateId(inst.id));
            }
            if inst.features.len() != dim {
                return Err(DataError::DimensionMismatch {
                    id: inst.id,
                    expected: dim,
                    got: inst.features.len(),
                });
            }
            if let Some(label) = inst.label {
                if label >= n_classes {
                    return Err(DataError::LabelOutOfRange {
                        id: inst.id,
                        label,
                        n_classes,
                    });
                }
            }
        }
        Ok(Self {
            instances,
            n_classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Feature dimension; zero for an empty dataset.
    pub fn dim(&self) -> usize {
        self.instances.first().map(|i| i.features.len()).unwrap_or(0)
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instance> {
        self.instances.iter()
    }

    pub fn fully_labeled(&self) -> bool {
        self.instances.iter().all(|i| i.label.is_some())
    }

    /// Labels of all instances; errors on the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<usize>, DataError> {
        self.instances
            .iter()
            .map(|i| i.label.ok_or(DataError::UnlabeledInstance { id: i.id }))
            .collect()
    }

    /// Instance count per declared class (unlabeled instances not counted).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for inst in &self.instances {
            if let Some(label) = inst.label {
                counts[label] += 1;
            }
        }
        counts
    }

    /// Keeps only the given feature columns, in the given order.
    pub fn project(&self, feature_indices: &[usize]) -> Dataset {
        let instances = self
            .instances
            .iter()
            .map(|inst| Instance {
                id: inst.id,
                features: feature_indices.iter().map(|&j| inst.features[j]).collect(),
                label: inst.label,
            })
            .collect();
        Dataset {
            instances,
            n_classes: self.n_classes,
        }
    }

    /// Learner-facing view with every label removed.
    pub fn without_labels(&self) -> Dataset {
        let instances = self
            .instances
            .iter()
            .map(|inst| Instance {
                id: inst.id,
                features: inst.features.clone(),
                label: None,
            })
            .collect();
        Dataset {
            instances,
            n_classes: self.n_classes,
        }
    }

    pub fn ids(&self) -> Vec<u64> {
        self.instances.iter().map(|i| i.id).collect()
    }
}

/// Assignment of every instance to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index per instance, parallel to the dataset order.
    pub assignment: Vec<usize>,
}

/// Which folds play which role in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_folds: BTreeSet<usize>,
    pub test_folds: BTreeSet<usize>,
    pub calibration_folds: BTreeSet<usize>,
    /// Folds simulating the unlabeled pool (active learning) or the
    /// "unlabeled data" block (calibration experiments).
    pub pool_folds: BTreeSet<usize>,
}

impl SplitSpec {
    pub fn new(
        train_folds: impl IntoIterator<Item = usize>,
        test_folds: impl IntoIterator<Item = usize>,
        calibration_folds: impl IntoIterator<Item = usize>,
        pool_folds: impl IntoIterator<Item = usize>,
    ) -> Self {
        Self {
            train_folds: train_folds.into_iter().collect(),
            test_folds: test_folds.into_iter().collect(),
            calibration_folds: calibration_folds.into_iter().collect(),
            pool_folds: pool_folds.into_iter().collect(),
        }
    }

    /// The default role template at rotation `offset`: one test fold, one
    /// calibration fold, three pool folds, and the rest for training.
    /// Rotating `offset` over `0..k` walks every fold through every role.
    pub fn rotated(k: usize, offset: usize) -> Result<Self, DataError> {
        if k < 6 {
            return Err(DataError::InvalidSpec(format!(
                "rotated template needs at least 6 folds, got {k}"
            )));
        }
        let at = |slot: usize| (offset + slot) % k;
        let test = BTreeSet::from([at(0)]);
        let calibration = BTreeSet::from([at(1)]);
        let pool: BTreeSet<usize> = (2..5).map(at).collect();
        let train: BTreeSet<usize> = (5..k).map(at).collect();
        Ok(Self {
            train_folds: train,
            test_folds: test,
            calibration_folds: calibration,
            pool_folds: pool,
        })
    }

    /// Checks the four sets partition `{0..k-1}`.
    pub fn validate(&self, k: usize) -> Result<(), DataError> {
        let sets = [
            &self.train_folds,
            &self.test_folds,
            &self.calibration_folds,
            &self.pool_folds,
        ];
        let total: usize = sets.iter().map(|s| s.len()).sum();
        let mut union = BTreeSet::new();
        for set in sets {
            union.extend(set.iter().copied());
        }
        if union.len() != total {
            return Err(DataError::InvalidSpec(
                "fold role sets overlap".to_string(),
            ));
        }
        let expected: BTreeSet<usize> = (0..k).collect();
        if union != expected {
            return Err(DataError::InvalidSpec(format!(
                "fold roles must cover exactly 0..{k}"
            )));
        }
        Ok(())
    }
}

/// The four datasets an experiment runs on.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub calibration: Dataset,
    /// Active-learning pool, or the "unlabeled" block in calibration
    /// experiments. Ground-truth labels stay attached for oracle
    /// simulation and scoring; learners must not read them.
    pub pool: Dataset,
}

/// Plans a stratified `k`-fold assignment: per-class counts across folds
/// differ by at most one.
///
/// Within each class the instances are shuffled with a seed-derived stream
/// and dealt to folds in ascending order. Remainder instances continue
/// round-robin across classes, so the total fold sizes also stay within
/// one of each other.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: RngSeed) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::InvalidFoldCount(k));
    }
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
    for (pos, inst) in dataset.iter().enumerate() {
        match inst.label {
            Some(label) => by_class[label].push(pos),
            None => return Err(DataError::UnlabeledInstance { id: inst.id }),
        }
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(DataError::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
    }

    let mut assignment = vec![0usize; dataset.len()];
    let mut extra_cursor = 0usize;
    for (class, members) in by_class.iter().enumerate() {
        let mut shuffled = members.clone();
        let mut rng = seed.derive(class as u64).rng();
        shuffled.shuffle(&mut rng);
        let base = shuffled.len() / k;
        let remainder = shuffled.len() % k;
        let mut take_per_fold = vec![base; k];
        for i in 0..remainder {
            take_per_fold[(extra_cursor + i) % k] += 1;
        }
        extra_cursor = (extra_cursor + remainder) % k;
        let mut cursor = 0;
        for (fold, &take) in take_per_fold.iter().enumerate() {
            for &pos in &shuffled[cursor..cursor + take] {
                assignment[pos] = fold;
            }
            cursor += take;
        }
    }
    Ok(FoldPlan { k, assignment })
}

/// Materializes the four split members from a fold plan and a role spec.
/// The members partition the dataset: every instance appears in exactly
/// one of them, in original dataset order.
pub fn assemble_split(
    dataset: &Dataset,
    plan: &FoldPlan,
    spec: &SplitSpec,
) -> Result<Split, DataError> {
    spec.validate(plan.k)?;
    if plan.assignment.len() != dataset.len() {
        return Err(DataError::PlanLengthMismatch {
            expected: plan.assignment.len(),
            got: dataset.len(),
        });
    }
    let mut members: [Vec<Instance>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for (inst, &fold) in dataset.iter().zip(&plan.assignment) {
        let slot = if spec.train_folds.contains(&fold) {
            0
        } else if spec.test_folds.contains(&fold) {
            1
        } else if spec.calibration_folds.contains(&fold) {
            2
        } else {
            3
        };
        members[slot].push(inst.clone());
    }
    let [train, test, calibration, pool] = members;
    let n = dataset.n_classes();
    Ok(Split {
        train: Dataset::new(train, n)?,
        test: Dataset::new(test, n)?,
        calibration: Dataset::new(calibration, n)?,
        pool: Dataset::new(pool, n)?,
    })
}
