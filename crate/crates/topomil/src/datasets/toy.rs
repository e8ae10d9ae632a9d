//! The hypersphere toy dataset.
//!
//! Negative instances are standard-normal draws in dim dimensions; positive
//! instances lie uniformly on the unit sphere centered at the origin, which
//! sits inside the support of the negatives. Positive bags mix at most 20%
//! sphere points (at least one) with normal points.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::tensor::Tensor;

use super::{Bag, DataError, InstancePool, Result};

/// Positive bags contain at most this fraction of sphere instances.
pub const TOY_POSITIVE_FRACTION_CAP: f64 = 0.2;

fn normal_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn sphere_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let row = normal_row(rng, dim);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return row.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn draw_bag_size(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> usize {
    let normal = Normal::new(mean, std).expect("validated std >= 0");
    let draw: f64 = normal.sample(rng);
    (draw.round() as i64).max(2) as usize
}

/// Generates a balanced toy dataset of `n_bags` bags (alternating negative
/// and positive). Deterministic in `seed`.
pub fn gen_toy(
    n_bags: usize,
    bag_size_mean: f64,
    bag_size_std: f64,
    dim: usize,
    seed: u64,
) -> Result<Vec<Bag>> {
    if dim < 2 {
        return Err(DataError::InvalidSpec(format!(
            "toy dimension must be >= 2, got {dim}"
        )));
    }
    if n_bags == 0 {
        return Err(DataError::InvalidSpec("n_bags must be >= 1".to_string()));
    }
    if !(bag_size_mean > 0.0) || !(bag_size_std >= 0.0) {
        return Err(DataError::InvalidSpec(
            "bag size parameters must be positive mean, nonnegative std".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos_bags = n_bags / 2;
    let mut bags = Vec::with_capacity(n_bags);
    let mut made_pos = 0;
    for index in 0..n_bags {
        let positive = index % 2 == 1 && made_pos < n_pos_bags;
        if positive {
            made_pos += 1;
        }
        let n = draw_bag_size(&mut rng, bag_size_mean, bag_size_std);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        if positive {
            let cap = (TOY_POSITIVE_FRACTION_CAP * n as f64).ceil() as usize;
            let k = rng.gen_range(1..=cap.max(1));
            for _ in 0..k {
                rows.push(sphere_row(&mut rng, dim));
            }
            for _ in k..n {
                rows.push(normal_row(&mut rng, dim));
            }
            rows.shuffle(&mut rng);
        } else {
            for _ in 0..n {
                rows.push(normal_row(&mut rng, dim));
            }
        }
        bags.push(Bag {
            id: format!("toy-{index:04}"),
            instances: Tensor::from_rows(&rows),
            label: usize::from(positive),
            group: None,
        });
    }
    Ok(bags)
}

/// A labeled instance pool with the same geometry: `n_positive` unit-sphere
/// rows (label 1) followed by `n_negative` standard-normal rows (label 0).
pub fn gen_toy_pool(
    n_positive: usize,
    n_negative: usize,
    dim: usize,
    seed: u64,
) -> Result<InstancePool> {
    if dim < 2 {
        return Err(DataError::InvalidSpec(format!(
            "toy dimension must be >= 2, got {dim}"
        )));
    }
    if n_positive == 0 || n_negative == 0 {
        return Err(DataError::InvalidSpec(
            "pool needs both positive and negative instances".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity((n_positive + n_negative) * dim);
    let mut labels = Vec::with_capacity(n_positive + n_negative);
    for _ in 0..n_positive {
        data.extend(sphere_row(&mut rng, dim));
        labels.push(1);
    }
    for _ in 0..n_negative {
        data.extend(normal_row(&mut rng, dim));
        labels.push(0);
    }
    Ok(InstancePool {
        features: Tensor::matrix(n_positive + n_negative, dim, data),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_instances_have_unit_norm() {
        let bags = gen_toy(8, 10.0, 2.0, 100, 3).unwrap();
        let mut positives_checked = 0;
        for bag in bags.iter().filter(|b| b.label == 1) {
            let mut bag_has_unit = false;
            for i in 0..bag.n_instances() {
                let norm: f64 = bag.instances.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() < 1e-12 {
                    bag_has_unit = true;
                    positives_checked += 1;
                }
            }
            assert!(bag_has_unit, "positive bag without a sphere instance");
        }
        assert!(positives_checked >= 1);
    }

    #[test]
    fn positive_fraction_capped() {
        let bags = gen_toy(40, 20.0, 4.0, 50, 9).unwrap();
        for bag in bags.iter().filter(|b| b.label == 1) {
            let n = bag.n_instances();
            let sphere_count = (0..n)
                .filter(|&i| {
                    let norm: f64 =
                        bag.instances.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                    (norm - 1.0).abs() < 1e-9
                })
                .count();
            let cap = (TOY_POSITIVE_FRACTION_CAP * n as f64).ceil() as usize;
            assert!(sphere_count >= 1 && sphere_count <= cap.max(1));
        }
    }

    #[test]
    fn seeded_generation_is_deterministic_and_balanced() {
        let a = gen_toy(11, 10.0, 2.0, 16, 77).unwrap();
        let b = gen_toy(11, 10.0, 2.0, 16, 77).unwrap();
        assert_eq!(a, b);
        let positives = a.iter().filter(|b| b.label == 1).count();
        assert_eq!(positives, 5);
        assert!(a.iter().all(|b| b.n_instances() >= 2));
    }

    #[test]
    fn negative_norms_follow_chi_distribution() {
        // Mean norm of a standard normal in R^100 is about
        // sqrt(100) * (1 - 1/400) ≈ 9.97; check within 2% over 10^4 draws.
        let pool = gen_toy_pool(1, 10_000, 100, 5).unwrap();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..pool.len() {
            if pool.labels[i] == 0 {
                total += pool.features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                count += 1;
            }
        }
        let mean = total / count as f64;
        let expected = 9.97;
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "mean norm {mean}"
        );
    }

    #[test]
    fn tiny_dimensions_rejected() {
        assert!(gen_toy(4, 10.0, 2.0, 1, 0).is_err());
        assert!(gen_toy_pool(5, 5, 1, 0).is_err());
    }
}
