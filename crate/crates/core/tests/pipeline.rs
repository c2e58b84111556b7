use cilfuse::engine::MethodFlags;
use cilfuse::evalkit::{
    run_continual, subset_accuracy_curves, weighted_subset_accuracy, AblationRow, RoundReport, SuitePlan,
};
use cilfuse::nets::{ExtractorSpec, TrainConfig};
use cilfuse::stream::{decode_packed, encode_packed, generate_synthetic, Dataset, SyntheticSpec};

fn tiny_data() -> (Dataset, Dataset) {
    generate_synthetic(&SyntheticSpec {
        num_classes: 6,
        train_per_class: 10,
        test_per_class: 5,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn tiny_plan() -> SuitePlan {
    SuitePlan {
        round_sizes: vec![2, 2, 2],
        seeds: vec![0],
        train: TrainConfig {
            max_epochs: 3,
            finetune_max_epochs: 2,
            probe_refit_epochs: 3,
            common_dim: 8,
            extractor: ExtractorSpec {
                widths: vec![3, 6],
                pool_after: vec![true, false],
                ..ExtractorSpec::default()
            },
            ..TrainConfig::default()
        },
        memory_budget: 12,
        rows: vec![AblationRow::trained("full", MethodFlags::full())],
    }
}

fn run(train: &Dataset, test: &Dataset, flags: MethodFlags) -> Vec<RoundReport> {
    let plan = tiny_plan();
    let stream = plan.stream(train.num_classes, 0).unwrap();
    run_continual(train, test, &stream, flags, &plan.train, plan.memory_budget, 0, &[], |_, _| Ok(())).unwrap()
}

#[test]
fn round_reports_satisfy_accounting_identities() {
    let (train, test) = tiny_data();
    let reports = run(&train, &test, MethodFlags::full());
    assert_eq!(reports.len(), 3);
    for r in &reports {
        assert!((r.accuracy - weighted_subset_accuracy(r)).abs() <= 1e-9);
        assert!(r.memory_size <= 12);
        assert_eq!(r.subset_accuracy.len(), r.round);
        assert_eq!(r.subset_sizes.iter().sum::<usize>(), 2 * r.round * 5);
        assert!(r.prune.is_some());
    }
    let curves = subset_accuracy_curves(&reports);
    assert!(curves.iter().enumerate().all(|(t, row)| row.len() == t + 1));
}

#[test]
fn reports_round_trip_through_json() {
    let (train, test) = tiny_data();
    for flags in [MethodFlags::full(), MethodFlags::none()] {
        let reports = run(&train, &test, flags);
        let text = serde_json::to_string(&reports).unwrap();
        let back: Vec<RoundReport> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, reports);
    }
}

#[test]
fn packed_encoding_is_stable_and_trainable() {
    let (train, test) = tiny_data();
    let bytes = encode_packed(&train).unwrap();
    let decoded = decode_packed(&bytes).unwrap();
    assert_eq!(encode_packed(&decoded).unwrap(), bytes);
    assert_eq!(decoded.num_classes, train.num_classes);
    assert_eq!(decoded.shape, train.shape);
    let test = decode_packed(&encode_packed(&test).unwrap()).unwrap();
    let reports = run(&decoded, &test, MethodFlags::none());
    assert!(reports.iter().all(|r| r.prune.is_none()));
    assert_eq!(reports.last().unwrap().subset_accuracy.len(), 3);
}
