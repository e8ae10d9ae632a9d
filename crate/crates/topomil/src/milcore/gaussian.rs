//! Gaussian fit of negative-bag latents and the Mahalanobis anomaly score.

use crate::tensor::Tensor;

use super::ModelError;

/// Gaussian estimate of the negative-instance latent distribution.
///
/// `covariance` already includes the ridge on its diagonal; `precision` is
/// its inverse, computed through a Cholesky factorization.
#[derive(Clone, Debug)]
pub struct NegativeGaussian {
    pub mean: Vec<f64>,
    pub covariance: Tensor,
    precision: Tensor,
    pub ridge: f64,
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or None if the
/// matrix is not positive definite.
fn cholesky(a: &Tensor) -> Option<Vec<f64>> {
    let d = a.rows();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a.get2(i, j);
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Solves A x = b given the Cholesky factor L (A = L Lᵀ).
fn cholesky_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    // forward: L y = b
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    // backward: Lᵀ x = y
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in (i + 1)..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    x
}

/// Fits mean and (ridged) sample covariance of negative-bag latents.
///
/// Requires at least two rows. The ridge is added to the covariance diagonal
/// before inversion; if the Cholesky factorization still fails the error
/// asks for a larger ridge.
pub fn fit_negative_gaussian(latents: &Tensor, ridge: f64) -> Result<NegativeGaussian, ModelError> {
    let (m, d) = (latents.rows(), latents.cols());
    if m < 2 {
        return Err(ModelError::TooFewNegativeLatents { got: m });
    }
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for (k, mu) in mean.iter_mut().enumerate() {
            *mu += latents.get2(i, k);
        }
    }
    for mu in &mut mean {
        *mu /= m as f64;
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..m {
        for a in 0..d {
            let da = latents.get2(i, a) - mean[a];
            for b in a..d {
                cov[a * d + b] += da * (latents.get2(i, b) - mean[b]);
            }
        }
    }
    let denom = (m - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / denom;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
        cov[a * d + a] += ridge;
    }
    let covariance = Tensor::matrix(d, d, cov);
    let l = cholesky(&covariance).ok_or(ModelError::CovarianceNotPd { ridge })?;
    // Invert column by column through the factor.
    let mut precision = vec![0.0; d * d];
    let mut unit = vec![0.0; d];
    for j in 0..d {
        unit[j] = 1.0;
        let col = cholesky_solve(&l, d, &unit);
        for i in 0..d {
            precision[i * d + j] = col[i];
        }
        unit[j] = 0.0;
    }
    Ok(NegativeGaussian {
        mean,
        covariance,
        precision: Tensor::matrix(d, d, precision),
        ridge,
    })
}

impl NegativeGaussian {
    /// Rebuilds a fitted Gaussian from stored mean/covariance (used by
    /// checkpoints); the covariance must already include its ridge.
    pub fn from_parts(mean: Vec<f64>, covariance: Tensor, ridge: f64) -> Result<Self, ModelError> {
        let d = covariance.rows();
        assert_eq!(mean.len(), d, "mean/covariance dimension mismatch");
        let l = cholesky(&covariance).ok_or(ModelError::CovarianceNotPd { ridge })?;
        let mut precision = vec![0.0; d * d];
        let mut unit = vec![0.0; d];
        for j in 0..d {
            unit[j] = 1.0;
            let col = cholesky_solve(&l, d, &unit);
            for i in 0..d {
                precision[i * d + j] = col[i];
            }
            unit[j] = 0.0;
        }
        Ok(NegativeGaussian {
            mean,
            covariance,
            precision: Tensor::matrix(d, d, precision),
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Cached inverse covariance.
    pub fn precision(&self) -> &Tensor {
        &self.precision
    }

    /// Mahalanobis distance of a latent vector from the fitted Gaussian.
    /// Always nonnegative; never differentiated (scores are pooling
    /// constants).
    pub fn mahalanobis(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        assert_eq!(z.len(), d, "latent dimension mismatch");
        let delta: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision.get2(i, j) * delta[j];
            }
            q += delta[i] * row;
        }
        // Tiny negative values can appear from rounding; the score is 0 there.
        q.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_point_fit_is_singular_without_ridge() {
        let pts = Tensor::matrix(2, 2, vec![0.0, 0.0, 2.0, 0.0]);
        let err = fit_negative_gaussian(&pts, 0.0).unwrap_err();
        assert!(matches!(err, ModelError::CovarianceNotPd { .. }));
        assert!(err.to_string().contains("ridge"));

        // With a ridge the same data is positive definite, the fitted mean is
        // the midpoint and the leading variance is 2 (sample covariance).
        let g = fit_negative_gaussian(&pts, 1.0).unwrap();
        assert_eq!(g.mean, vec![1.0, 0.0]);
        assert_eq!(g.covariance.get2(0, 0), 3.0); // 2 + ridge
        assert_eq!(g.covariance.get2(1, 1), 1.0); // 0 + ridge
        assert_eq!(g.covariance.get2(0, 1), 0.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let one = Tensor::matrix(1, 2, vec![0.0, 0.0]);
        assert!(matches!(
            fit_negative_gaussian(&one, 1e-3),
            Err(ModelError::TooFewNegativeLatents { got: 1 })
        ));
    }

    #[test]
    fn standard_normal_sample_recovers_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (m, d) = (10_000, 3);
        let data: Vec<f64> = (0..m * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let g = fit_negative_gaussian(&Tensor::matrix(m, d, data), 0.0).unwrap();
        for mu in &g.mean {
            assert!(mu.abs() < 0.05, "mean {mu}");
        }
        for i in 0..d {
            assert!((g.covariance.get2(i, i) - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn mahalanobis_hand_cases() {
        let g = NegativeGaussian::from_parts(
            vec![0.0, 0.0],
            Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            0.0,
        )
        .unwrap();
        assert_eq!(g.mahalanobis(&[0.0, 0.0]), 0.0);
        assert!((g.mahalanobis(&[3.0, 4.0]) - 5.0).abs() < 1e-12);

        let g = NegativeGaussian::from_parts(
            vec![1.0, -1.0],
            Tensor::matrix(2, 2, vec![4.0, 0.0, 0.0, 1.0]),
            0.0,
        )
        .unwrap();
        // z - mu = (2, 0), Sigma = diag(4, 1): sqrt(4/4) = 1.
        assert!((g.mahalanobis(&[3.0, -1.0]) - 1.0).abs() < 1e-12);
    }
}
