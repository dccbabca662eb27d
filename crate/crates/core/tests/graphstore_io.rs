use std::collections::{BTreeMap, BTreeSet};

use hhrgnn::graphstore::{
    generate_heterogeneous, load_graph, load_splits, make_splits, save_graph, save_splits, GenParamsHeterogeneous,
    Graph,
};
use ndarray::Array2;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        prop::num::f64::NORMAL,
        prop::num::f64::SUBNORMAL,
        Just(0.0),
        Just(-0.0),
        -10.0..10.0f64,
    ]
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    (1usize..14, 1usize..5, 1usize..4).prop_flat_map(|(n, d, classes)| {
        (
            prop::collection::vec(finite(), n * d),
            prop::collection::btree_set((0..n, 0..n), 0..n * 2),
            prop::collection::btree_map(0..n, 0..classes, 0..=n),
        )
            .prop_map(move |(values, edges, labels)| {
                let features = Array2::from_shape_vec((n, d), values).unwrap();
                Graph::homogeneous(features, edges, labels, classes).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(graph in arb_graph()) {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&graph, dir.path()).unwrap();
        let loaded = load_graph(dir.path()).unwrap();
        prop_assert_eq!(&loaded, &graph);
        for (a, b) in loaded.features.iter().zip(&graph.features) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn splits_are_disjoint_balanced_and_persist(seed in any::<u64>(), per_class in 1usize..10) {
        let labels: BTreeMap<usize, usize> = (0..60).map(|i| (i, i % 3)).collect();
        let graph = Graph::homogeneous(Array2::zeros((60, 1)), Vec::new(), labels, 3).unwrap();
        let splits = make_splits(&graph, per_class, 10, seed).unwrap();
        splits.validate(&graph).unwrap();
        prop_assert_eq!(splits.train.len(), 3 * per_class);
        for c in 0..3 {
            prop_assert_eq!(splits.train.iter().filter(|&&n| n % 3 == c).count(), per_class);
        }
        let all: BTreeSet<usize> = splits.train.iter().chain(&splits.val).chain(&splits.test).copied().collect();
        prop_assert_eq!(all.len(), 60);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.json");
        save_splits(&splits, &path).unwrap();
        prop_assert_eq!(load_splits(&path).unwrap(), splits);
    }
}

#[test]
fn heterogeneous_graph_round_trips() {
    let graph = generate_heterogeneous(&GenParamsHeterogeneous { seed: 9, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_graph(&graph, dir.path()).unwrap();
    assert_eq!(load_graph(dir.path()).unwrap(), graph);
}

#[test]
fn saving_twice_gives_identical_bytes() {
    let graph = generate_heterogeneous(&GenParamsHeterogeneous::default()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save_graph(&graph, a.path()).unwrap();
    save_graph(&graph, b.path()).unwrap();
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap()
        );
    }
}
