//! Sampling bags from a labeled instance pool.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

use super::{Bag, BagDatasetSpec, DataError, InstancePool, Result};

/// Samples `spec.n_bags` bags from the pool: balanced positive/negative
/// counts (alternating, negatives first), bag sizes from the spec Gaussian
/// rounded and clamped to >= 2, positive bags holding between 1 and
/// ceil(cap * n) positive-class instances. Sampling is without replacement
/// within a bag and with replacement across bags.
pub fn build_bags(pool: &InstancePool, spec: &BagDatasetSpec) -> Result<Vec<Bag>> {
    spec.validate()?;
    let positives: Vec<usize> = (0..pool.len())
        .filter(|&i| pool.labels[i] == spec.positive_class)
        .collect();
    let negatives: Vec<usize> = (0..pool.len())
        .filter(|&i| pool.labels[i] != spec.positive_class)
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(DataError::InvalidSpec(format!(
            "pool must contain the positive class {} and at least one other label",
            spec.positive_class
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(spec.bag_size_mean, spec.bag_size_std)
        .map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let n_pos_bags = spec.n_bags / 2;
    let mut made_pos = 0;
    let mut bags = Vec::with_capacity(spec.n_bags);
    for index in 0..spec.n_bags {
        let positive = index % 2 == 1 && made_pos < n_pos_bags;
        if positive {
            made_pos += 1;
        }
        let draw: f64 = normal.sample(&mut rng);
        let n = (draw.round() as i64).max(2) as usize;

        let k = if positive {
            let cap = (spec.positive_fraction_cap * n as f64).ceil() as usize;
            rng.gen_range(1..=cap.max(1))
        } else {
            0
        };
        if k > positives.len() {
            return Err(DataError::PoolExhausted {
                needed: k,
                available: positives.len(),
                class: "positive",
            });
        }
        if n - k > negatives.len() {
            return Err(DataError::PoolExhausted {
                needed: n - k,
                available: negatives.len(),
                class: "negative",
            });
        }

        let mut rows: Vec<usize> = Vec::with_capacity(n);
        rows.extend(rand::seq::index::sample(&mut rng, positives.len(), k)
            .iter()
            .map(|i| positives[i]));
        rows.extend(rand::seq::index::sample(&mut rng, negatives.len(), n - k)
            .iter()
            .map(|i| negatives[i]));
        rows.shuffle(&mut rng);

        let d = pool.dim();
        let mut data = Vec::with_capacity(n * d);
        for &r in &rows {
            data.extend_from_slice(pool.features.row(r));
        }
        bags.push(Bag {
            id: format!("bag-{index:04}"),
            instances: Tensor::matrix(n, d, data),
            label: usize::from(positive),
            group: None,
        });
    }
    Ok(bags)
}
