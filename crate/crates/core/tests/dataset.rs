use std::collections::HashSet;

use rand::Rng;
use spiking_gcn::dataset::{
    load_content_cites, make_split, ratio_split_sizes, scale_features, write_content_cites, Dataset,
    FeatureScaling, SplitMode, SplitSpec, OFFICIAL_TEST, OFFICIAL_VAL, TRAIN_PER_CLASS,
};
use spiking_gcn::graph::{build_graph, FeatureMatrix};
use spiking_gcn::rng::{stream, Purpose};
use spiking_gcn::Error;

fn random_dataset(n_classes: usize, per_class: usize, dim: usize, seed: u64) -> Dataset {
    let n = n_classes * per_class;
    let mut rng = stream(seed, Purpose::Custom(4), 0, 0);
    let edges: Vec<(usize, usize)> = (0..2 * n).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| f64::from(u8::from(rng.gen_bool(0.1)))).collect())
        .collect();
    let labels = (0..n).map(|i| i % n_classes).collect();
    let names = (0..n_classes).map(|c| format!("class_{c}")).collect();
    Dataset::new(
        build_graph(&edges, n).unwrap(),
        FeatureMatrix::from_rows(&rows).unwrap(),
        labels,
        names,
    )
    .unwrap()
}

fn assert_disjoint(split: &SplitSpec) {
    let mut seen = HashSet::new();
    for &i in split.train_idx.iter().chain(&split.val_idx).chain(&split.test_idx) {
        assert!(seen.insert(i), "node {i} appears twice");
    }
}

#[test]
fn official_split_shape() {
    let ds = random_dataset(7, 300, 12, 1);
    let split = make_split(&ds, SplitMode::Official, 3).unwrap();
    assert_eq!(split.train_idx.len(), 7 * TRAIN_PER_CLASS);
    assert_eq!(split.val_idx.len(), OFFICIAL_VAL);
    assert_eq!(split.test_idx.len(), OFFICIAL_TEST);
    assert_disjoint(&split);
    for class in 0..7 {
        let count = split.train_idx.iter().filter(|&&i| ds.labels[i] == class).count();
        assert_eq!(count, TRAIN_PER_CLASS);
    }
    assert_eq!(split, make_split(&ds, SplitMode::Official, 3).unwrap());
    assert_ne!(split, make_split(&ds, SplitMode::Official, 4).unwrap());
}

#[test]
fn ratio_split_shape() {
    let ds = random_dataset(3, 50, 4, 2);
    let split = make_split(&ds, SplitMode::Ratio, 9).unwrap();
    let (train, val, test) = ratio_split_sizes(150);
    assert_eq!((split.train_idx.len(), split.val_idx.len(), split.test_idx.len()), (train, val, test));
    assert_disjoint(&split);
    assert_eq!(train + val + test, 150);
}

#[test]
fn official_split_needs_enough_nodes() {
    let ds = random_dataset(3, 15, 4, 2);
    assert!(matches!(
        make_split(&ds, SplitMode::Official, 0),
        Err(Error::InsufficientNodes { .. })
    ));
}

#[test]
fn files_round_trip() {
    let ds = random_dataset(4, 25, 6, 5);
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("toy.content");
    let cites = dir.path().join("toy.cites");
    write_content_cites(&ds, &content, &cites).unwrap();
    let back = load_content_cites(&content, &cites).unwrap();
    assert_eq!(back.graph, ds.graph);
    assert_eq!(back.features, ds.features);
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.class_names, ds.class_names);

    let split = make_split(&back, SplitMode::Ratio, 1).unwrap();
    let path = dir.path().join("split.txt");
    split.save(&path).unwrap();
    assert_eq!(SplitSpec::load(&path).unwrap(), split);
}

#[test]
fn row_normalized_rows_sum_to_one() {
    let ds = random_dataset(2, 40, 8, 6);
    let scaled = scale_features(&ds, FeatureScaling::RowNormalize).unwrap();
    for i in 0..ds.n_nodes() {
        let sum: f64 = scaled.features.row(i).iter().sum();
        let raw: f64 = ds.features.row(i).iter().sum();
        if raw == 0.0 {
            assert_eq!(sum, 0.0);
        } else {
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
