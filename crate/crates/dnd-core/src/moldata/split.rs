//! Deterministic random splits keyed on record ids.

use super::{DataError, DataResult, Dataset};
use crate::seeding::derive_seed;

/// Split into (train, val, test). Sizes are floor-based for val and test
/// with the remainder going to train. Ids, not positions, are hashed, so a
/// permutation of the input yields the same id-level partition.
pub fn split_random(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> DataResult<(Dataset, Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 || ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(DataError::BadSplitRatios { sum });
    }
    let n = dataset.len();
    let n_val = (ratios.1 * n as f64).floor() as usize;
    let n_test = (ratios.2 * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut keyed: Vec<(u64, usize)> = dataset
        .iter()
        .enumerate()
        .map(|(i, r)| (derive_seed(seed, &[r.id.as_bytes()]), i))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| dataset.get(a.1).id.cmp(&dataset.get(b.1).id))
    });
    let order: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();

    let train = dataset.subset(&order[..n_train]);
    let val = dataset.subset(&order[n_train..n_train + n_val]);
    let test = dataset.subset(&order[n_train + n_val..]);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moldata::{generate_synthetic, SyntheticConfig};
    use std::collections::BTreeSet;

    fn dataset(count: usize) -> Dataset {
        generate_synthetic(&SyntheticConfig {
            count,
            seed: 3,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn eight_one_one_on_ten_records() {
        let ds = dataset(10);
        let (train, val, test) = split_random(&ds, (0.8, 0.1, 0.1), 42).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (8, 1, 1));
    }

    #[test]
    fn deterministic_and_exhaustive() {
        let ds = dataset(23);
        let (a1, b1, c1) = split_random(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        let (a2, b2, c2) = split_random(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(c1, c2);

        let mut ids: BTreeSet<&str> = BTreeSet::new();
        for part in [&a1, &b1, &c1] {
            for r in part.iter() {
                assert!(ids.insert(&r.id), "id {} in two splits", r.id);
            }
        }
        assert_eq!(ids.len(), ds.len());
    }

    #[test]
    fn partition_is_id_level_not_positional() {
        let ds = dataset(17);
        let reversed = ds.subset(&(0..ds.len()).rev().collect::<Vec<_>>());
        let (a1, b1, c1) = split_random(&ds, (0.6, 0.2, 0.2), 5).unwrap();
        let (a2, b2, c2) = split_random(&reversed, (0.6, 0.2, 0.2), 5).unwrap();
        let ids = |d: &Dataset| d.iter().map(|r| r.id.clone()).collect::<BTreeSet<_>>();
        assert_eq!(ids(&a1), ids(&a2));
        assert_eq!(ids(&b1), ids(&b2));
        assert_eq!(ids(&c1), ids(&c2));
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = Dataset::new(vec![]).unwrap();
        assert!(matches!(
            split_random(&ds, (0.8, 0.1, 0.1), 0),
            Err(DataError::EmptyDataset)
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        let ds = dataset(5);
        assert!(matches!(
            split_random(&ds, (0.5, 0.1, 0.1), 0),
            Err(DataError::BadSplitRatios { .. })
        ));
    }
}
