//! Quantile-thresholded shape function and the self-normalized sample weights
//! derived from it.
//!
//! `S(H) = (H − H_lb) · 1/(1 + exp(−S₀ (H − γ)))`, where `γ` is the sample
//! `(1 − ρ)`-quantile of the batch. With large `S₀` the sigmoid is close to the
//! indicator `I{H ≥ γ}`, so only the top `ρ` fraction of a batch carries weight.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GassError, Result};

/// How `H_lb` is chosen for a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LowerBoundPolicy {
    /// A known bound; must lie strictly below every observed value.
    Fixed(f64),
    /// `min(H) − delta · max(1, range(H))`.
    BatchMinMinus(f64),
}

impl Default for LowerBoundPolicy {
    fn default() -> Self {
        LowerBoundPolicy::BatchMinMinus(0.01)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    /// Sigmoid sharpness `S₀`.
    pub s0: f64,
    /// Elite fraction `ρ`.
    pub rho: f64,
    pub lower_bound: LowerBoundPolicy,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec { s0: 1e5, rho: 0.05, lower_bound: LowerBoundPolicy::default() }
    }
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(invalid(format!("s0 must be positive, got {}", self.s0)));
        }
        check_rho(self.rho)?;
        match self.lower_bound {
            LowerBoundPolicy::Fixed(v) if !v.is_finite() => {
                Err(invalid(format!("fixed lower bound must be finite, got {v}")))
            }
            LowerBoundPolicy::BatchMinMinus(d) if !(d > 0.0 && d.is_finite()) => {
                Err(invalid(format!("lower-bound delta must be positive, got {d}")))
            }
            _ => Ok(()),
        }
    }
}

/// Raw shape values and the normalized weights built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedValues {
    pub raw_shape: Vec<f64>,
    pub weights: Vec<f64>,
    /// Quantile threshold used for this batch.
    pub gamma: f64,
    /// Lower bound used for this batch.
    pub h_lb: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("rho must lie in (0, 1), got {rho}")))
    }
}

/// 1-based rank of the sample `(1 − ρ)`-quantile, `⌈(1 − ρ) N⌉`.
pub fn quantile_rank(n: usize, rho: f64) -> usize {
    let x = (1.0 - rho) * n as f64;
    // (1 − ρ) N is often an integer that picks up a rounding ulp.
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * (n as f64).max(1.0) { r } else { x.ceil() };
    (k as usize).clamp(1, n)
}

/// The `⌈(1 − ρ) N⌉`-th smallest value, no interpolation.
pub fn sample_quantile(values: &[f64], rho: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(GassError::EmptyInput("quantile of an empty sample"));
    }
    check_rho(rho)?;
    let k = quantile_rank(values.len(), rho);
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Logistic function evaluated without overflow for any finite argument.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Elementwise shape values. Results that would underflow are floored at
/// `f64::MIN_POSITIVE` so every value stays strictly positive.
pub fn shape_values(h_values: &[f64], gamma: f64, spec: &ShapeSpec, h_lb: f64) -> Result<Vec<f64>> {
    h_values
        .iter()
        .map(|&h| {
            if h <= h_lb {
                return Err(GassError::LowerBoundViolation { h_lb, value: h });
            }
            let s = (h - h_lb) * sigmoid(spec.s0 * (h - gamma));
            Ok(s.max(f64::MIN_POSITIVE))
        })
        .collect()
}

pub fn resolve_lower_bound(h_values: &[f64], policy: LowerBoundPolicy) -> Result<f64> {
    if h_values.is_empty() {
        return Err(GassError::EmptyInput("lower bound of an empty sample"));
    }
    let (min, max) = h_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)));
    match policy {
        LowerBoundPolicy::Fixed(v) if v >= min => {
            Err(GassError::LowerBoundViolation { h_lb: v, value: min })
        }
        LowerBoundPolicy::Fixed(v) => Ok(v),
        LowerBoundPolicy::BatchMinMinus(delta) => Ok(min - delta * (max - min).max(1.0)),
    }
}

pub fn normalize_weights(raw_shape: &[f64]) -> Result<Vec<f64>> {
    if raw_shape.is_empty() {
        return Err(GassError::EmptyInput("weights of an empty sample"));
    }
    if let Some(s) = raw_shape.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(invalid(format!("shape values must be positive and finite, got {s}")));
    }
    let total: f64 = raw_shape.iter().sum();
    if !total.is_finite() {
        return Err(invalid("sum of shape values overflowed"));
    }
    Ok(raw_shape.iter().map(|s| s / total).collect())
}

/// Quantile, lower bound, shape values and weights for one batch.
pub fn weigh_batch(h_values: &[f64], spec: &ShapeSpec) -> Result<WeightedValues> {
    let gamma = sample_quantile(h_values, spec.rho)?;
    let h_lb = resolve_lower_bound(h_values, spec.lower_bound)?;
    let raw_shape = shape_values(h_values, gamma, spec, h_lb)?;
    let weights = normalize_weights(&raw_shape)?;
    Ok(WeightedValues { raw_shape, weights, gamma, h_lb })
}
