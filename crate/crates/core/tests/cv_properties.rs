use std::collections::{BTreeMap, BTreeSet};

use embryo_core::cv::{assert_disjoint, fold_split, grouped_kfold, Grouped};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Item {
    id: String,
    patient: String,
}

impl Grouped for Item {
    fn item_id(&self) -> &str {
        &self.id
    }

    fn group_id(&self) -> &str {
        &self.patient
    }
}

fn dataset(sizes: &[usize]) -> Vec<Item> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(p, &n)| {
            (0..n).map(move |e| Item {
                id: format!("e{p}-{e}"),
                patient: format!("p{p}"),
            })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn folds_partition_without_leakage(
        sizes in prop::collection::vec(1usize..=5, 10..60),
        k in 2usize..=10,
        seed in any::<u64>(),
    ) {
        let items = dataset(&sizes);
        let a = grouped_kfold(&items, k, seed).unwrap();

        let mut seen = BTreeSet::new();
        for f in 0..k {
            let (train, val) = fold_split(&items, &a, f).unwrap();
            prop_assert_eq!(train.len() + val.len(), items.len());
            assert_disjoint(&train, &val, f).unwrap();
            let tp: BTreeSet<&str> = train.iter().map(|r| r.group_id()).collect();
            prop_assert!(val.iter().all(|r| !tp.contains(r.group_id())));
            for r in &val {
                prop_assert!(seen.insert(r.item_id().to_string()));
            }
        }
        prop_assert_eq!(seen.len(), items.len());

        let mut per_fold: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        for r in &items {
            per_fold.entry(a.fold(&r.id).unwrap()).or_default().insert(&r.patient);
        }
        let counts: Vec<usize> = (0..k).map(|f| per_fold.get(&f).map_or(0, |s| s.len())).collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "patient counts {:?}", counts);
    }

    #[test]
    fn assignment_is_a_function_of_the_seed(
        sizes in prop::collection::vec(1usize..=5, 10..30),
        seed in any::<u64>(),
    ) {
        let items = dataset(&sizes);
        prop_assert_eq!(grouped_kfold(&items, 10, seed).unwrap(), grouped_kfold(&items, 10, seed).unwrap());
    }
}

#[test]
fn leakage_is_detected() {
    let items = dataset(&[2, 2, 2]);
    let err = assert_disjoint(&items[..3], &items[3..], 4).unwrap_err();
    assert!(err.to_string().contains("p1"), "{err}");
}
