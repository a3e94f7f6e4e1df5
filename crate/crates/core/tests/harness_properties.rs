use std::collections::BTreeMap;

use lfpdecode_core::harness::SweepDataset;
use lfpdecode_core::{
    cluster_edcs, directional_summary, generate_dataset, loocv, relative_gain, sweep, BankParams,
    ConfusionMatrix, DatasetParams, EdcEntry, EdcTable, Error, ExperimentConfig, Grouping,
    TrialRecord,
};
use proptest::prelude::*;

fn small_params(
    separation: f64,
    noise_sd: f64,
    heterogeneity: f64,
    num_edcs: usize,
) -> DatasetParams {
    DatasetParams {
        bank: BankParams {
            num_classes: 4,
            num_channels: 4,
            frequencies: 3,
            smoothness: 1.0,
            radius: 1.0,
            separation,
            jitter: 0.0,
        },
        noise_sd,
        trial_len: 64,
        num_trials: 120,
        num_edcs,
        heterogeneity,
        base_depth_mm: 1.0,
        depth_step_mm: 0.25,
        depth_jitter_mm: 0.1,
    }
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        window_len: 64,
        frequencies: 3,
        modes: 10,
        cluster_window: 120,
        ..ExperimentConfig::default()
    }
}

fn accuracy(params: &DatasetParams, seed: u64) -> f64 {
    let data = generate_dataset(params, seed).unwrap();
    loocv(&data.trials, 4, &small_config()).unwrap().accuracy
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn separable_zero_noise_classes_decode_perfectly() {
    let data = generate_dataset(&small_params(0.5, 0.0, 0.0, 1), 1).unwrap();
    let config = ExperimentConfig {
        whiten: false,
        ridge: Some(1e-9),
        ..small_config()
    };
    let report = loocv(&data.trials, 4, &config).unwrap();
    assert_eq!(report.accuracy, 1.0);
    for (i, row) in report.confusion.counts().iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            assert!(i == j || c == 0);
        }
    }
}

#[test]
fn fold_accounting_with_a_thin_class() {
    let data = generate_dataset(&small_params(0.0, 1.0, 0.0, 1), 2).unwrap();
    // keep only two trials of class 4
    let mut kept: Vec<&TrialRecord> = Vec::new();
    let mut fours = 0;
    for t in &data.trials {
        if t.label() == 4 {
            fours += 1;
            if fours > 2 {
                continue;
            }
        }
        kept.push(t);
    }
    let report = loocv(&kept, 4, &small_config()).unwrap();
    assert_eq!(report.skipped, 2);
    assert_eq!(report.evaluated + report.skipped, kept.len());
    assert_eq!(report.confusion.total() as usize, report.evaluated);
    assert_eq!(
        report.accuracy,
        report.confusion.correct() as f64 / report.evaluated as f64
    );
}

#[test]
fn loocv_rejects_infeasible_configs() {
    let data = generate_dataset(&small_params(0.0, 1.0, 0.0, 1), 3).unwrap();
    let too_many = ExperimentConfig {
        modes: 21,
        ..small_config()
    };
    assert!(matches!(
        loocv(&data.trials, 4, &too_many),
        Err(Error::Parameter(_))
    ));
    let three: Vec<&TrialRecord> = data.trials.iter().filter(|t| t.label() != 2).collect();
    assert!(matches!(
        loocv(&three, 4, &small_config()),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn one_cell_sweep_matches_loocv() {
    let data = generate_dataset(&small_params(0.0, 2.0, 0.0, 1), 4).unwrap();
    let direct = loocv(&data.trials, 4, &small_config()).unwrap();
    let datasets = [SweepDataset {
        anchor: "edc-000".into(),
        trials: data.trials.iter().collect(),
    }];
    let cells = sweep(&[small_config()], &datasets, 4).unwrap();
    assert_eq!(cells.len(), 1);
    let m = cells[0].outcome.as_ref().unwrap();
    assert_eq!(m.accuracy, direct.accuracy);
    assert_eq!(m.confusion, direct.confusion);
    assert!(sweep(&[], &datasets, 4).is_err());
}

#[test]
fn failing_cells_are_flagged_not_fatal() {
    let data = generate_dataset(&small_params(0.0, 2.0, 0.0, 1), 5).unwrap();
    let datasets = [SweepDataset {
        anchor: "edc-000".into(),
        trials: data.trials.iter().collect(),
    }];
    let bad = ExperimentConfig {
        window_len: 200,
        ..small_config()
    };
    let cells = sweep(&[bad, small_config()], &datasets, 4).unwrap();
    assert!(cells[0].outcome.is_err());
    assert!(cells[1].outcome.is_ok());
    assert_eq!(
        cells.iter().map(|c| c.index).collect::<Vec<_>>(),
        vec![0, 1]
    );
}

#[test]
fn block_diagonal_directional_summary() {
    // rows 1-4: 7 of 10 correct, one error per other block member; rows 5-8: 4 of 10, two per member
    let mut counts = vec![vec![0u64; 8]; 8];
    for i in 0..8 {
        let (lo, hit, miss) = if i < 4 { (0, 7, 1) } else { (4, 4, 2) };
        for j in lo..lo + 4 {
            counts[i][j] = if i == j { hit } else { miss };
        }
    }
    let cm = ConfusionMatrix::from_counts(counts).unwrap();
    let mut grouping = Grouping::new();
    grouping.insert("contra_up_down".into(), vec![1, 2, 3, 4]);
    grouping.insert("ipsi".into(), vec![5, 6, 7, 8]);
    let s = directional_summary(&cm, &grouping).unwrap();
    assert_eq!(s["contra_up_down"], 0.7);
    assert_eq!(s["ipsi"], 0.4);

    let uniform = ConfusionMatrix::from_counts(vec![vec![5; 8]; 8]).unwrap();
    let u = directional_summary(&uniform, &grouping).unwrap();
    assert!(u.values().all(|&v| v == 0.125));

    let mut empty = grouping.clone();
    empty.insert("none".into(), vec![]);
    assert!(matches!(
        directional_summary(&cm, &empty),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn relative_gain_examples() {
    assert!((relative_gain(0.94, 0.47).unwrap() - 1.0).abs() <= 1e-12);
    assert_eq!(relative_gain(0.3, 0.3).unwrap(), 0.0);
    assert!(matches!(relative_gain(0.5, 0.0), Err(Error::UndefinedGain)));
    let (c, p) = (0.8125, 0.4375);
    assert!((relative_gain(c, p).unwrap() - 0.375 / 0.4375).abs() <= 1e-12);
}

fn line_table(distances: &[f64]) -> EdcTable {
    EdcTable::new(
        distances
            .iter()
            .enumerate()
            .map(|(i, &d)| EdcEntry {
                edc_id: format!("e{i:02}"),
                depth: vec![d; 3],
                trial_ids: (0..1 + i % 4).map(|j| format!("e{i:02}-{j}")).collect(),
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn clusters_grow_by_prefix(distances in prop::collection::vec(0.0f64..5.0, 2..12), w1 in 1usize..30, extra in 0usize..30) {
        let table = line_table(&distances);
        let small = cluster_edcs("e00", &table, w1).unwrap();
        let large = cluster_edcs("e00", &table, w1 + extra).unwrap();
        prop_assert!(large.members.starts_with(&small.members));
        prop_assert!(small.members.len() >= w1.min(table.total_trials()));
        prop_assert!(small.members[0].starts_with("e00-"));
    }
}

#[test]
fn unknown_anchor_is_a_lookup_error() {
    assert!(matches!(
        cluster_edcs("nope", &line_table(&[0.0]), 5),
        Err(Error::Lookup(_))
    ));
}

#[test]
fn median_accuracy_rises_with_separation() {
    let seps = [0.0, 0.6, 0.9, 1.2];
    let medians: Vec<f64> = seps
        .iter()
        .map(|&s| {
            median(
                (0..10)
                    .map(|seed| accuracy(&small_params(s, 3.0, 0.0, 1), seed))
                    .collect(),
            )
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] >= w[0]), "{medians:?}");
    assert!(medians[3] > medians[0], "{medians:?}");
}

#[test]
fn heterogeneous_clusters_decode_worse() {
    let homogeneous = median(
        (0..10)
            .map(|seed| accuracy(&small_params(0.0, 2.0, 0.0, 2), seed))
            .collect(),
    );
    let mixed = median(
        (0..10)
            .map(|seed| accuracy(&small_params(0.0, 2.0, 1.0, 2), seed))
            .collect(),
    );
    assert!(
        mixed < homogeneous,
        "heterogeneous {mixed} vs homogeneous {homogeneous}"
    );
}

#[test]
fn grouping_must_cover_every_class() {
    let cm = ConfusionMatrix::new(3);
    let mut g: Grouping = BTreeMap::new();
    g.insert("a".into(), vec![1, 2]);
    assert!(matches!(
        directional_summary(&cm, &g),
        Err(Error::Parameter(_))
    ));
}
