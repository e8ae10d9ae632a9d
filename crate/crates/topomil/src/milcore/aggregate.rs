//! The five bag-level aggregation functions.
//!
//! Every aggregator maps n latent rows to one latent vector and is
//! permutation invariant. Attention and regressor-guided pooling also
//! return their (simplex) instance weights; anomaly pooling returns the
//! unnormalized combined weights.

use crate::autodiff::{Node, Tape};
use crate::tensor::Tensor;

use super::gaussian::NegativeGaussian;
use super::ModelError;

/// Variance floor in the regressor-guided normalization; also defines the
/// degenerate n = 1 path (omega = 0, alpha = 1).
pub const RGP_VAR_EPSILON: f64 = 1e-8;

/// Which aggregation function a model uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AggregatorKind {
    Max,
    Mean,
    Attention { hidden: usize },
    Rgp,
    Anomaly { hidden: usize },
}

/// Default attention hidden width.
pub const DEFAULT_ATTENTION_HIDDEN: usize = 128;

impl AggregatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorKind::Max => "max",
            AggregatorKind::Mean => "mean",
            AggregatorKind::Attention { .. } => "attention",
            AggregatorKind::Rgp => "rgp",
            AggregatorKind::Anomaly { .. } => "anomaly",
        }
    }
}

fn expect_latent_rows(z: &Node<'_>, op: &'static str) -> Result<(usize, usize), ModelError> {
    let shape = z.shape();
    if shape.len() != 2 {
        return Err(ModelError::BadLatents {
            op,
            shape: shape.clone(),
        });
    }
    if shape[0] == 0 {
        return Err(ModelError::EmptyBag);
    }
    Ok((shape[0], shape[1]))
}

/// Coordinatewise maximum over instances; gradient goes to the argmax row
/// of each coordinate (ties to the lowest row).
pub fn aggregate_max<'t>(z: Node<'t>) -> Result<Node<'t>, ModelError> {
    expect_latent_rows(&z, "aggregate_max")?;
    let (max, _) = z.max(Some(0))?;
    Ok(max)
}

/// Arithmetic mean over instances.
pub fn aggregate_mean<'t>(z: Node<'t>) -> Result<Node<'t>, ModelError> {
    expect_latent_rows(&z, "aggregate_mean")?;
    Ok(z.mean(Some(0))?)
}

/// Attention pooling: a = softmax(tanh(Z·V)·w), zeta = sum_i a_i z_i.
///
/// `v` has shape latent×hidden and `w` hidden×1 (the transposes of the
/// conventional notation, so no transpose op is needed).
pub fn aggregate_attention<'t>(
    tape: &'t Tape,
    z: Node<'t>,
    v: Node<'t>,
    w: Node<'t>,
) -> Result<(Node<'t>, Node<'t>), ModelError> {
    let (n, _) = expect_latent_rows(&z, "aggregate_attention")?;
    let scores = z.matmul(v)?.tanh().matmul(w)?.reshape(&[n])?;
    let weights = scores.softmax()?;
    let zeta = weighted_rows(tape, weights, z)?;
    Ok((zeta, weights))
}

/// Regressor-guided pooling. The regressor (w: latent×2, b: 1×2) scores
/// each instance, scores are standardized with a variance floor, softmaxed
/// into weights, and the same (w, b) later serves as the bag classifier.
pub fn aggregate_rgp<'t>(
    tape: &'t Tape,
    z: Node<'t>,
    w: Node<'t>,
    b: Node<'t>,
) -> Result<(Node<'t>, Node<'t>), ModelError> {
    let (n, _) = expect_latent_rows(&z, "aggregate_rgp")?;
    let ones = tape.constant(&Tensor::matrix(n, 1, vec![1.0; n]));
    let two_class = z.matmul(w)?.add(ones.matmul(b)?)?;
    // p_i = p_i^+ - p_i^-
    let signs = tape.constant(&Tensor::matrix(2, 1, vec![1.0, -1.0]));
    let p = two_class.matmul(signs)?.reshape(&[n])?;
    let centered = p.sub(p.mean(None)?)?;
    let std = centered.square().mean(None)?.shift(RGP_VAR_EPSILON).sqrt()?;
    let omega = centered.div(std)?;
    let weights = omega.softmax()?;
    let zeta = weighted_rows(tape, weights, z)?;
    Ok((zeta, weights))
}

/// Anomaly-aware pooling: w_i = W_D * d_i + W_A * a_i, then
/// zeta = sum_i w_i z_i. The combined weights are not constrained to a
/// simplex. The Mahalanobis scores d_i differentiate with respect to the
/// latents; the Gaussian's mean and precision enter as constants. A 1e-12
/// pad under the square root keeps the derivative finite at z = mu.
pub fn aggregate_anomaly<'t>(
    tape: &'t Tape,
    z: Node<'t>,
    v: Node<'t>,
    w: Node<'t>,
    gaussian: &NegativeGaussian,
    weight_distance: Node<'t>,
    weight_attention: Node<'t>,
) -> Result<(Node<'t>, Node<'t>), ModelError> {
    let (n, latent) = expect_latent_rows(&z, "aggregate_anomaly")?;
    let (_, attention) = aggregate_attention(tape, z, v, w)?;
    // per-row delta^T P delta via M = Z - 1 mu, rowsum((M P) .* M)
    let ones = tape.constant(&Tensor::matrix(n, 1, vec![1.0; n]));
    let mu = tape.constant(&Tensor::matrix(1, latent, gaussian.mean.clone()));
    let precision = tape.constant(gaussian.precision());
    let centered = z.sub(ones.matmul(mu)?)?;
    let quad = centered.matmul(precision)?.mul(centered)?.sum(Some(1))?;
    let anomaly = quad.shift(1e-12).sqrt()?;
    let combined = weight_distance
        .mul(anomaly)?
        .add(weight_attention.mul(attention)?)?;
    let zeta = weighted_rows(tape, combined, z)?;
    Ok((zeta, combined))
}

/// sum_i weights_i * z_i as a latent vector.
fn weighted_rows<'t>(
    _tape: &'t Tape,
    weights: Node<'t>,
    z: Node<'t>,
) -> Result<Node<'t>, ModelError> {
    let n = weights.len();
    let latent = z.shape()[1];
    let zeta = weights.reshape(&[1, n])?.matmul(z)?.reshape(&[latent])?;
    Ok(zeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milcore::gaussian::fit_negative_gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tape_with(rows: &[Vec<f64>]) -> (Tape, Tensor) {
        (Tape::new(), Tensor::from_rows(rows))
    }

    fn random_latents(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn max_and_mean_hand_cases() {
        let (tape, z) = tape_with(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let zn = tape.leaf(&z);
        assert_eq!(aggregate_max(zn).unwrap().value().data(), &[1.0, 1.0]);

        let (tape, z) = tape_with(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        let zn = tape.leaf(&z);
        assert_eq!(aggregate_mean(zn).unwrap().value().data(), &[1.0, 1.0]);

        let (tape, z) = tape_with(&[vec![3.0, -1.0]]);
        let zn = tape.leaf(&z);
        assert_eq!(aggregate_max(zn).unwrap().value().data(), &[3.0, -1.0]);
        assert_eq!(aggregate_mean(zn).unwrap().value().data(), &[3.0, -1.0]);
    }

    #[test]
    fn max_and_mean_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_latents(&mut rng, 5, 3);
        let mut rows: Vec<Vec<f64>> = (0..5).map(|i| z.row(i).to_vec()).collect();
        rows.rotate_left(2);
        rows.swap(0, 3);
        let permuted = Tensor::from_rows(&rows);

        let tape = Tape::new();
        let a = aggregate_max(tape.leaf(&z)).unwrap().value();
        let b = aggregate_max(tape.leaf(&permuted)).unwrap().value();
        assert_eq!(a.data(), b.data());

        let am = aggregate_mean(tape.leaf(&z)).unwrap().value();
        let bm = aggregate_mean(tape.leaf(&permuted)).unwrap().value();
        for (x, y) in am.data().iter().zip(bm.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_zero_scores_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_latents(&mut rng, 4, 3);
        let tape = Tape::new();
        let zn = tape.leaf(&z);
        let v = tape.leaf(&random_latents(&mut rng, 3, 5));
        let w = tape.leaf(&Tensor::matrix(5, 1, vec![0.0; 5]));
        let (zeta, weights) = aggregate_attention(&tape, zn, v, w).unwrap();
        for a in weights.value().data() {
            assert!((a - 0.25).abs() < 1e-12);
        }
        let mean = aggregate_mean(zn).unwrap().value();
        for (x, y) in zeta.value().data().iter().zip(mean.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_single_instance_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_latents(&mut rng, 1, 3);
        let tape = Tape::new();
        let zn = tape.leaf(&z);
        let v = tape.leaf(&random_latents(&mut rng, 3, 4));
        let w = tape.leaf(&random_latents(&mut rng, 4, 1));
        let (_, weights) = aggregate_attention(&tape, zn, v, w).unwrap();
        assert_eq!(weights.value().data(), &[1.0]);
    }

    #[test]
    fn attention_weights_sum_to_one_and_permute_with_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_latents(&mut rng, 6, 3);
        let vt = random_latents(&mut rng, 3, 4);
        let wt = random_latents(&mut rng, 4, 1);

        let tape = Tape::new();
        let (_, weights) =
            aggregate_attention(&tape, tape.leaf(&z), tape.leaf(&vt), tape.leaf(&wt)).unwrap();
        let wv = weights.value();
        let sum: f64 = wv.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        let perm = [3usize, 0, 5, 1, 4, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| z.row(i).to_vec()).collect();
        let (_, wp) = aggregate_attention(
            &tape,
            tape.leaf(&Tensor::from_rows(&rows)),
            tape.leaf(&vt),
            tape.leaf(&wt),
        )
        .unwrap();
        let wpv = wp.value();
        for (new_pos, &old_pos) in perm.iter().enumerate() {
            assert!((wpv.data()[new_pos] - wv.data()[old_pos]).abs() < 1e-12);
        }
    }

    #[test]
    fn rgp_identical_instances_uniform() {
        let row = vec![0.3, -0.4, 0.9];
        let z = Tensor::from_rows(&[row.clone(), row.clone(), row.clone(), row.clone()]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tape = Tape::new();
        let w = tape.leaf(&random_latents(&mut rng, 3, 2));
        let b = tape.leaf(&random_latents(&mut rng, 1, 2));
        let (zeta, alpha) = aggregate_rgp(&tape, tape.leaf(&z), w, b).unwrap();
        for a in alpha.value().data() {
            assert!((a - 0.25).abs() < 1e-12);
        }
        for (x, y) in zeta.value().data().iter().zip(&row) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rgp_single_instance_weight_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = random_latents(&mut rng, 1, 3);
        let tape = Tape::new();
        let w = tape.leaf(&random_latents(&mut rng, 3, 2));
        let b = tape.leaf(&random_latents(&mut rng, 1, 2));
        let (_, alpha) = aggregate_rgp(&tape, tape.leaf(&z), w, b).unwrap();
        assert_eq!(alpha.value().data(), &[1.0]);
    }

    #[test]
    fn rgp_weights_shift_invariant_and_simplex() {
        // Adding a constant to every score p_i must not change alpha
        // (mean-centering); realized by shifting the regressor bias.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random_latents(&mut rng, 5, 3);
        let w = random_latents(&mut rng, 3, 2);
        let b = random_latents(&mut rng, 1, 2);

        let tape = Tape::new();
        let (_, alpha) =
            aggregate_rgp(&tape, tape.leaf(&z), tape.leaf(&w), tape.leaf(&b)).unwrap();
        let a0 = alpha.value();
        let sum: f64 = a0.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(a0.data().iter().all(|v| *v >= 0.0));

        // b' = b + (c, 0) adds c to every p_i.
        let mut shifted = b.clone();
        shifted.data_mut()[0] += 11.25;
        let (_, alpha2) =
            aggregate_rgp(&tape, tape.leaf(&z), tape.leaf(&w), tape.leaf(&shifted)).unwrap();
        for (x, y) in a0.data().iter().zip(alpha2.value().data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn anomaly_reduces_to_scaled_attention_when_distance_weight_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = random_latents(&mut rng, 5, 3);
        let neg = random_latents(&mut rng, 20, 3);
        let g = fit_negative_gaussian(&neg, 1e-3).unwrap();
        let v = random_latents(&mut rng, 3, 4);
        let w = random_latents(&mut rng, 4, 1);

        let tape = Tape::new();
        let zn = tape.leaf(&z);
        let vn = tape.leaf(&v);
        let wn = tape.leaf(&w);
        let wa = 1.75;
        let (zeta, combined) = aggregate_anomaly(
            &tape,
            zn,
            vn,
            wn,
            &g,
            tape.scalar(0.0),
            tape.scalar(wa),
        )
        .unwrap();
        let (zeta_att, attention) = aggregate_attention(&tape, zn, vn, wn).unwrap();
        for (c, a) in combined.value().data().iter().zip(attention.value().data()) {
            assert!((c - wa * a).abs() < 1e-12);
        }
        for (x, y) in zeta.value().data().iter().zip(zeta_att.value().data()) {
            assert!((x - wa * y).abs() < 1e-12);
        }
    }

    #[test]
    fn anomaly_equal_scores_with_zero_attention_weight_is_scaled_mean() {
        // All instances at the same point have equal Mahalanobis scores, so
        // with W_A = 0 the pooled vector is proportional to the mean.
        let row = vec![0.5, 0.25, -0.75];
        let z = Tensor::from_rows(&[row.clone(), row.clone(), row.clone()]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let neg = random_latents(&mut rng, 15, 3);
        let g = fit_negative_gaussian(&neg, 1e-3).unwrap();

        let tape = Tape::new();
        let zn = tape.leaf(&z);
        let v = tape.leaf(&random_latents(&mut rng, 3, 4));
        let w = tape.leaf(&random_latents(&mut rng, 4, 1));
        let (zeta, _) =
            aggregate_anomaly(&tape, zn, v, w, &g, tape.scalar(2.0), tape.scalar(0.0)).unwrap();
        let d = g.mahalanobis(&row);
        for (x, y) in zeta.value().data().iter().zip(&row) {
            assert!((x - 3.0 * 2.0 * d * y).abs() < 1e-9);
        }
    }

    #[test]
    fn anomaly_linear_in_its_two_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = random_latents(&mut rng, 6, 3);
        let neg = random_latents(&mut rng, 25, 3);
        let g = fit_negative_gaussian(&neg, 1e-3).unwrap();
        let v = random_latents(&mut rng, 3, 4);
        let w = random_latents(&mut rng, 4, 1);

        let run = |wd: f64, wa: f64| -> Vec<f64> {
            let tape = Tape::new();
            let (zeta, _) = aggregate_anomaly(
                &tape,
                tape.leaf(&z),
                tape.leaf(&v),
                tape.leaf(&w),
                &g,
                tape.scalar(wd),
                tape.scalar(wa),
            )
            .unwrap();
            zeta.value().into_data()
        };
        let (wd, wa) = (0.8, -1.3);
        let combined = run(wd, wa);
        let d_only = run(1.0, 0.0);
        let a_only = run(0.0, 1.0);
        for i in 0..combined.len() {
            let expect = wd * d_only[i] + wa * a_only[i];
            assert!((combined[i] - expect).abs() < 1e-10);
        }
    }
}
