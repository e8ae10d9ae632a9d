//! Cross-validation fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::Bag;

use super::TrainError;

/// Seeded k-fold split: returns (train_indices, test_indices) per fold.
///
/// Indices are shuffled and assigned round-robin. With `group_aware`, whole
/// groups (bag.group, falling back to the bag id) are assigned to folds so a
/// group never straddles the train/test boundary.
pub fn k_fold(
    bags: &[Bag],
    k: usize,
    seed: u64,
    group_aware: bool,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>, TrainError> {
    if k < 2 {
        return Err(TrainError::InvalidConfig(format!(
            "k-fold needs k >= 2, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_bag = vec![0usize; bags.len()];
    if group_aware {
        let mut groups: Vec<&str> = Vec::new();
        for bag in bags {
            let key = bag.group.as_deref().unwrap_or(&bag.id);
            if !groups.contains(&key) {
                groups.push(key);
            }
        }
        if groups.len() < k {
            return Err(TrainError::InvalidConfig(format!(
                "{} groups cannot fill {k} folds",
                groups.len()
            )));
        }
        groups.shuffle(&mut rng);
        let fold_of_group: std::collections::HashMap<&str, usize> = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (*g, i % k))
            .collect();
        for (b, bag) in bags.iter().enumerate() {
            let key = bag.group.as_deref().unwrap_or(&bag.id);
            fold_of_bag[b] = fold_of_group[key];
        }
    } else {
        if bags.len() < k {
            return Err(TrainError::InvalidConfig(format!(
                "{} bags cannot fill {k} folds",
                bags.len()
            )));
        }
        let mut order: Vec<usize> = (0..bags.len()).collect();
        order.shuffle(&mut rng);
        for (pos, &b) in order.iter().enumerate() {
            fold_of_bag[b] = pos % k;
        }
    }
    Ok((0..k)
        .map(|fold| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (b, &f) in fold_of_bag.iter().enumerate() {
                if f == fold {
                    test.push(b);
                } else {
                    train.push(b);
                }
            }
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn bags(n: usize) -> Vec<Bag> {
        (0..n)
            .map(|i| Bag {
                id: format!("b{i}"),
                instances: Tensor::matrix(2, 2, vec![i as f64; 4]),
                label: i % 2,
                group: None,
            })
            .collect()
    }

    fn grouped_bags(groups: &[&str]) -> Vec<Bag> {
        groups
            .iter()
            .enumerate()
            .map(|(i, g)| Bag {
                id: format!("b{i}"),
                instances: Tensor::matrix(2, 2, vec![i as f64; 4]),
                label: i % 2,
                group: Some(g.to_string()),
            })
            .collect()
    }

    #[test]
    fn ten_bags_five_folds() {
        let folds = k_fold(&bags(10), 5, 1, false).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = std::collections::HashSet::new();
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            for t in test {
                assert!(seen.insert(*t), "test sets overlap");
                assert!(!train.contains(t));
            }
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn group_aware_keeps_groups_atomic() {
        let bags = grouped_bags(&["p1", "p1", "p2", "p2", "p3", "p3"]);
        let folds = k_fold(&bags, 3, 7, true).unwrap();
        for (train, test) in &folds {
            for idx in test {
                let g = bags[*idx].group.as_ref().unwrap();
                assert!(
                    train.iter().all(|t| bags[*t].group.as_ref().unwrap() != g),
                    "group {g} split across folds"
                );
            }
        }
        // one group per fold with 3 groups and k = 3
        for (_, test) in &folds {
            assert_eq!(test.len(), 2);
        }
    }

    #[test]
    fn too_few_groups_error() {
        let grouped = grouped_bags(&["p1", "p1", "p2"]);
        assert!(k_fold(&grouped, 3, 7, true).is_err());
        assert!(k_fold(&bags(3), 5, 0, false).is_err());
        assert!(k_fold(&bags(3), 1, 0, false).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_the_dataset(n in 4usize..40, k in 2usize..6, seed in 0u64..500) {
            prop_assume!(n >= k);
            let bags = bags(n);
            let folds = k_fold(&bags, k, seed, false).unwrap();
            let mut covered = vec![false; n];
            for (train, test) in &folds {
                let train_set: std::collections::HashSet<_> = train.iter().collect();
                for t in test {
                    prop_assert!(!train_set.contains(t));
                    prop_assert!(!covered[*t], "test folds overlap");
                    covered[*t] = true;
                }
                prop_assert_eq!(train.len() + test.len(), n);
            }
            prop_assert!(covered.into_iter().all(|c| c));
        }
    }
}
