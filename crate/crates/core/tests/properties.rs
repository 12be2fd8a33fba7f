//! Property tests for the invariants that hold across the whole input
//! space: stratification balance, split partitioning, the Wasserstein
//! metric axioms, simplex preservation through calibration, score bounds,
//! and quantile monotonicity.

use proptest::prelude::*;

use probcal::calibration::{fit_technique, CalibTechnique};
use probcal::data::{assemble_split, stratified_kfold, Dataset, Instance, RngSeed, SplitSpec};
use probcal::metrics::{apcs, auc_binary, mpcs, reference_histogram, wasserstein1, Histogram, ReferenceKind};
use probcal::scores::{ScoreMatrix, ScoreVector};
use probcal::tdigest::TDigest;

fn labeled_dataset(class_sizes: &[usize]) -> Dataset {
    let mut instances = Vec::new();
    let mut id = 0u64;
    for (class, &size) in class_sizes.iter().enumerate() {
        for i in 0..size {
            instances.push(Instance::new(
                id,
                vec![class as f64 + i as f64 * 0.01, i as f64],
                Some(class),
            ));
            id += 1;
        }
    }
    Dataset::new(instances, class_sizes.len().max(2)).unwrap()
}

fn histogram_strategy(bins: usize) -> impl Strategy<Value = Histogram> {
    prop::collection::vec(0u32..32, bins).prop_map(move |counts| {
        let mut counts = counts;
        let total: u32 = counts.iter().sum();
        // Pad to a power of two so the masses sum to exactly one.
        let padded = (total.max(1)).next_power_of_two();
        counts[0] += padded - total;
        Histogram::new(counts.iter().map(|&c| c as f64 / padded as f64).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn stratified_folds_balance_every_class(
        sizes in prop::collection::vec(5usize..40, 2..5),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!(sizes.iter().all(|&s| s >= k));
        let dataset = labeled_dataset(&sizes);
        let plan = stratified_kfold(&dataset, k, RngSeed(seed)).unwrap();
        let mut per_fold_class = vec![vec![0usize; sizes.len()]; k];
        for (inst, &fold) in dataset.iter().zip(&plan.assignment) {
            per_fold_class[fold][inst.label.unwrap()] += 1;
        }
        for class in 0..sizes.len() {
            let counts: Vec<usize> = per_fold_class.iter().map(|f| f[class]).collect();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            prop_assert!(spread <= 1, "class {class}: {counts:?}");
        }
    }

    #[test]
    fn split_assembly_partitions_the_dataset(
        sizes in prop::collection::vec(8usize..30, 2..4),
        offset in 0usize..8,
        seed in any::<u64>(),
    ) {
        let dataset = labeled_dataset(&sizes);
        let k = 8;
        prop_assume!(sizes.iter().all(|&s| s >= k));
        let plan = stratified_kfold(&dataset, k, RngSeed(seed)).unwrap();
        let spec = SplitSpec::rotated(k, offset).unwrap();
        let split = assemble_split(&dataset, &plan, &spec).unwrap();
        let total = split.train.len() + split.test.len() + split.calibration.len() + split.pool.len();
        prop_assert_eq!(total, dataset.len());
        let mut ids: Vec<u64> = split.train.ids();
        ids.extend(split.test.ids());
        ids.extend(split.calibration.ids());
        ids.extend(split.pool.ids());
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), dataset.len(), "no id may appear twice");
    }

    #[test]
    fn wasserstein_is_a_metric(
        a in histogram_strategy(10),
        b in histogram_strategy(10),
        c in histogram_strategy(10),
    ) {
        let d_ab = wasserstein1(&a, &b).unwrap();
        let d_ba = wasserstein1(&b, &a).unwrap();
        prop_assert!((d_ab - d_ba).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&d_ab));
        prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        if a.mass() != b.mass() {
            prop_assert!(d_ab > 0.0);
        }
        let d_ac = wasserstein1(&a, &c).unwrap();
        let d_bc = wasserstein1(&b, &c).unwrap();
        prop_assert!(d_ac <= d_ab + d_bc + 1e-12);
    }

    #[test]
    fn calibration_scores_stay_in_unit_interval(
        hists in prop::collection::vec(histogram_strategy(10), 2..5),
        auc in 0.0f64..=1.0,
        kind_index in 0usize..3,
    ) {
        let reference = reference_histogram(ReferenceKind::ALL[kind_index], hists.len(), 10).unwrap();
        let a = apcs(auc, &hists, &reference).unwrap();
        prop_assert!((0.0..=1.0).contains(&a.score), "apcs {}", a.score);
        prop_assert!((a.score - (a.k_term + a.pcs_minus_k)).abs() < 1e-12);
        let m = mpcs(auc, &hists, &reference).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.score), "mpcs {}", m.score);
        prop_assert!((m.score - m.k_term * m.pcs_minus_k).abs() < 1e-12);
        if (auc - 0.5).abs() < 1e-15 {
            prop_assert_eq!(m.score, 0.0);
        }
    }

    #[test]
    fn every_technique_returns_simplex_outputs(
        raw in prop::collection::vec(
            prop::collection::vec(1e-6f64..1.0, 3),
            12..40
        ),
    ) {
        let rows: Vec<ScoreVector> = raw.into_iter().map(ScoreVector::from_raw).collect();
        let n = rows.len();
        let scores = ScoreMatrix::new(3, rows).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        for technique in CalibTechnique::ALL {
            let map = fit_technique(technique, &scores, Some(&labels), 10, 100.0).unwrap();
            let out = map.calibrate_matrix(&scores).unwrap();
            for row in out.iter() {
                let sum: f64 = row.scores().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9, "{technique:?} sum {sum}");
                prop_assert!(row.scores().iter().all(|s| (0.0..=1.0).contains(s)));
            }
        }
    }

    #[test]
    fn quantiles_are_monotone_in_q(
        values in prop::collection::vec(-1e3f64..1e3, 1..400),
        qs in prop::collection::vec(0.0f64..=1.0, 2..10),
    ) {
        let mut digest = TDigest::new(50.0);
        for &v in &values {
            digest.add(v, 1.0).unwrap();
        }
        let mut qs = qs;
        qs.sort_by(|a, b| a.total_cmp(b));
        let mut last = f64::NEG_INFINITY;
        for &q in &qs {
            let v = digest.quantile(q).unwrap();
            prop_assert!(v >= last, "quantile({q}) = {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn auc_is_rank_invariant(
        scores in prop::collection::vec(0.0f64..1.0, 4..60),
        flips in any::<u64>(),
    ) {
        let n = scores.len();
        let positives: Vec<bool> = (0..n).map(|i| (flips >> (i % 64)) & 1 == 1).collect();
        prop_assume!(positives.iter().any(|&p| p) && positives.iter().any(|&p| !p));
        let base = auc_binary(&scores, &positives).unwrap();
        // A strictly increasing transform cannot change a rank statistic.
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + s).collect();
        let after = auc_binary(&transformed, &positives).unwrap();
        prop_assert!((base - after).abs() < 1e-12);
    }
}
