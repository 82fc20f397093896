//! Independent multivariate Gaussian written as an exponential family
//! `f(x; θ) = exp{θᵀT(x) − φ(θ)}` with sufficient statistics
//! `T(x) = (x₁..x_n, x₁²..x_n²)`.
//!
//! Every `2n`-vector and `2n × 2n` matrix in this crate uses that ordering:
//! the `n` linear coordinates first, then the `n` squares.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, GassError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Natural parameters of an independent Gaussian.
///
/// `linear[i]` multiplies `x_i` and `quadratic[i]` multiplies `x_i²`; each
/// quadratic coefficient is strictly negative so the density is integrable.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParam {
    linear: Vec<f64>,
    quadratic: Vec<f64>,
}

/// First and second raw moments, `E[X_i]` and `E[X_i²]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl MeanMoments {
    /// Moments in sufficient-statistic order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.first.clone();
        v.extend_from_slice(&self.second);
        v
    }

    /// Splits a `2n` vector of moments and checks `second − first² > 0`.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(2) || v.is_empty() {
            return Err(invalid(format!("moment vector of odd or zero length {}", v.len())));
        }
        let n = v.len() / 2;
        let m = MeanMoments { first: v[..n].to_vec(), second: v[n..].to_vec() };
        for (i, (a, b)) in m.first.iter().zip(&m.second).enumerate() {
            let var = b - a * a;
            if !(var > 0.0 && var.is_finite()) {
                return Err(invalid(format!("moment pair {i} has non-positive variance {var}")));
            }
        }
        Ok(m)
    }
}

impl NaturalParam {
    pub fn new(linear: Vec<f64>, quadratic: Vec<f64>) -> Result<Self> {
        if linear.len() != quadratic.len() {
            return Err(GassError::DimensionMismatch {
                expected: linear.len(),
                actual: quadratic.len(),
            });
        }
        if linear.is_empty() {
            return Err(GassError::EmptyInput("natural parameter"));
        }
        if let Some((i, v)) = linear.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("linear component {i} is not finite ({v})")));
        }
        if let Some((i, v)) =
            quadratic.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v < 0.0))
        {
            return Err(invalid(format!("quadratic component {i} must be finite and negative, got {v}")));
        }
        Ok(NaturalParam { linear, quadratic })
    }

    /// Builds θ from a `2n` vector in sufficient-statistic order.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(invalid(format!("parameter vector of odd length {}", v.len())));
        }
        let n = v.len() / 2;
        Self::new(v[..n].to_vec(), v[n..].to_vec())
    }

    pub fn from_moments(mean: &[f64], variance: &[f64]) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(GassError::DimensionMismatch {
                expected: mean.len(),
                actual: variance.len(),
            });
        }
        if let Some((i, v)) =
            variance.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(invalid(format!("variance {i} must be finite and positive, got {v}")));
        }
        let linear = mean.iter().zip(variance).map(|(m, v)| m / v).collect();
        let quadratic = variance.iter().map(|v| -0.5 / v).collect();
        Self::new(linear, quadratic)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[f64] {
        &self.quadratic
    }

    /// θ as a `2n` vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.linear.clone();
        v.extend_from_slice(&self.quadratic);
        v
    }

    pub fn mean(&self) -> Vec<f64> {
        self.linear.iter().zip(&self.quadratic).map(|(l, q)| -l / (2.0 * q)).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.quadratic.iter().map(|q| -1.0 / (2.0 * q)).collect()
    }

    pub fn to_moments(&self) -> (Vec<f64>, Vec<f64>) {
        (self.mean(), self.variance())
    }

    /// `E_θ[T(X)]`.
    pub fn expected_t(&self) -> MeanMoments {
        let (mean, var) = self.to_moments();
        let second = mean.iter().zip(&var).map(|(m, v)| m * m + v).collect();
        MeanMoments { first: mean, second }
    }

    /// `Var_θ[T(X)]` in closed form. Only the `(x_i, x_i²)` pairs covary.
    pub fn analytic_var_t(&self) -> DMatrix<f64> {
        let n = self.dim();
        let (mean, var) = self.to_moments();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let (mu, s2) = (mean[i], var[i]);
            m[(i, i)] = s2;
            m[(i, n + i)] = 2.0 * mu * s2;
            m[(n + i, i)] = 2.0 * mu * s2;
            m[(n + i, n + i)] = 2.0 * s2 * s2 + 4.0 * mu * mu * s2;
        }
        m
    }

    /// Draws `count` i.i.d. points.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let (mean, var) = self.to_moments();
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        (0..count)
            .map(|_| {
                mean.iter()
                    .zip(&sd)
                    .map(|(m, s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + s * z
                    })
                    .collect()
            })
            .collect()
    }

    /// Maps standard-normal coordinates `z` to `μ + σ z`.
    pub fn transform_standard(&self, z: &[f64]) -> Vec<f64> {
        let (mean, var) = self.to_moments();
        z.iter().zip(mean.iter().zip(&var)).map(|(z, (m, v))| m + v.sqrt() * z).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(GassError::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        let (mean, var) = self.to_moments();
        Ok(x.iter()
            .zip(mean.iter().zip(&var))
            .map(|(x, (m, v))| -0.5 * (LN_2PI + v.ln() + (x - m) * (x - m) / v))
            .sum())
    }
}

/// Sufficient statistics `T(x) = (x, x²)`.
pub fn sufficient_stats(x: &[f64]) -> Vec<f64> {
    let mut t = x.to_vec();
    t.extend(x.iter().map(|v| v * v));
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn theta(mean: &[f64], var: &[f64]) -> NaturalParam {
        NaturalParam::from_moments(mean, var).unwrap()
    }

    #[test]
    fn moments_of_simple_params() {
        let t = NaturalParam::new(vec![0.0], vec![-0.5]).unwrap();
        assert_eq!(t.to_moments(), (vec![0.0], vec![1.0]));
        let t = NaturalParam::new(vec![2.0], vec![-0.5]).unwrap();
        assert_eq!(t.to_moments(), (vec![2.0], vec![1.0]));
    }

    #[test]
    fn from_moments_examples() {
        let t = theta(&[0.0], &[1.0]);
        assert_eq!(t.linear(), &[0.0]);
        assert_eq!(t.quadratic(), &[-0.5]);
        let t = theta(&[0.0; 5], &[1000.0; 5]);
        assert!(t.quadratic().iter().all(|q| (q + 5e-4).abs() < 1e-18));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(NaturalParam::new(vec![0.0], vec![0.0]).is_err());
        assert!(NaturalParam::new(vec![0.0], vec![0.3]).is_err());
        assert!(NaturalParam::new(vec![f64::NAN], vec![-1.0]).is_err());
        assert!(NaturalParam::new(vec![0.0], vec![f64::NEG_INFINITY]).is_err());
        assert!(NaturalParam::from_moments(&[0.0], &[0.0]).is_err());
        assert!(NaturalParam::from_moments(&[0.0], &[-1.0]).is_err());
        assert!(MeanMoments::from_slice(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn expected_t_examples() {
        let m = theta(&[0.0], &[1.0]).expected_t();
        assert_eq!((m.first, m.second), (vec![0.0], vec![1.0]));
        let m = theta(&[2.0], &[3.0]).expected_t();
        assert_eq!(m.first, vec![2.0]);
        assert!((m.second[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_var_blocks() {
        let v = theta(&[0.0], &[1.0]).analytic_var_t();
        assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0, 2.0]);
        let v = theta(&[1.0], &[1.0]).analytic_var_t();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 2.0, 6.0]);
        let v = theta(&[1.0, -3.0], &[2.0, 0.5]).analytic_var_t();
        assert_eq!(v, v.transpose());
        assert_eq!(v[(0, 1)], 0.0);
        assert_eq!(v[(0, 3)], 0.0);
        assert!(v.symmetric_eigenvalues().iter().all(|e| *e >= -1e-12));
    }

    #[test]
    fn sampling_is_seeded() {
        let t = theta(&[1.0, 2.0], &[3.0, 4.0]);
        let a = t.sample(16, &mut ChaCha8Rng::seed_from_u64(9));
        let b = t.sample(16, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let c = t.sample(16, &mut ChaCha8Rng::seed_from_u64(10));
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_variance_collapses_draws() {
        let t = theta(&[4.0], &[1e-20]);
        for x in t.sample(100, &mut ChaCha8Rng::seed_from_u64(1)) {
            assert!((x[0] - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn log_density_mode_and_translation() {
        let t = theta(&[0.0], &[1.0]);
        assert!((t.log_density(&[0.0]).unwrap() + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let a = theta(&[0.5, -1.0], &[2.0, 0.3]);
        let b = theta(&[0.5 + 3.0, -1.0 + 3.0], &[2.0, 0.3]);
        let la = a.log_density(&[0.1, 0.2]).unwrap();
        let lb = b.log_density(&[3.1, 3.2]).unwrap();
        assert!((la - lb).abs() < 1e-12);
        assert!(t.log_density(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn log_density_integrates_to_one() {
        // Midpoint rule over ±12σ.
        let t = theta(&[0.7], &[2.5]);
        let sd = 2.5f64.sqrt();
        let (lo, hi, steps) = (0.7 - 12.0 * sd, 0.7 + 12.0 * sd, 200_000);
        let h = (hi - lo) / steps as f64;
        let total: f64 = (0..steps)
            .map(|i| t.log_density(&[lo + (i as f64 + 0.5) * h]).unwrap().exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn sufficient_stats_ordering() {
        assert_eq!(sufficient_stats(&[2.0, -3.0]), vec![2.0, -3.0, 4.0, 9.0]);
    }
}
