//! Numerical self-checks for the identities the search relies on.
//!
//! For a θ-independent shape `S`, `L(θ) = E_θ[S(H(X))]` and `l = ln L`. At the
//! current θ the gradients are
//!
//! * `∇L = E_θ[S T] − E_θ[S] E_θ[T]`
//! * `∇l = E_p[T] − E_θ[T]`, with `p ∝ S f_θ`
//!
//! and the curvature of `l` contains `−Var_θ[T]`. The checks compare Monte
//! Carlo estimates of these expressions with central finite differences of
//! `L̂` taken under common random numbers: one set of uniforms is pushed
//! through the Gaussian inverse CDF and re-scaled for every perturbed θ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::engine::Objective;
use crate::error::{invalid, Result};
use crate::model::{sufficient_stats, NaturalParam};
use crate::shaping::sample_quantile;

/// Default finite-difference step in natural-parameter units.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `‖analytic − numeric‖∞ / ‖numeric‖∞`.
    pub relative_error: f64,
    pub samples_used: usize,
    pub seed: u64,
    /// Monte Carlo estimate of `L(θ)`.
    pub l_hat: f64,
    /// Shape values were constant, so the comparison says nothing.
    pub inconclusive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCheckReport {
    pub analytic_diag: Vec<f64>,
    pub sampled_diag: Vec<f64>,
    pub max_relative_error: f64,
    pub samples_used: usize,
    pub seed: u64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCheckReport {
    pub rho: f64,
    /// `Φ⁻¹(1 − ρ)`.
    pub target: f64,
    pub sizes: Vec<usize>,
    /// Mean of `|γ̂_N − target|` over the seeds, one entry per size.
    pub mean_abs_error: Vec<f64>,
    pub seeds: usize,
    /// Errors decrease with `N`.
    pub decreasing: bool,
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Common random numbers: `count` rows of `n` standard-normal scores.
fn common_scores(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let normal = standard_normal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| {
                    // Open interval keeps the inverse CDF finite.
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    normal.inverse_cdf(u)
                })
                .collect()
        })
        .collect()
}

struct ShapedSample {
    points: Vec<Vec<f64>>,
    shape: Vec<f64>,
}

fn shaped<S, O>(theta: &NaturalParam, scores: &[Vec<f64>], shape: &S, objective: &O) -> ShapedSample
where
    S: Fn(f64) -> f64 + ?Sized,
    O: Objective + ?Sized,
{
    let points: Vec<Vec<f64>> = scores.iter().map(|z| theta.transform_standard(z)).collect();
    let shape = points.iter().map(|x| shape(objective.evaluate(x))).collect();
    ShapedSample { points, shape }
}

fn l_hat<S, O>(theta: &NaturalParam, scores: &[Vec<f64>], shape: &S, objective: &O) -> f64
where
    S: Fn(f64) -> f64 + ?Sized,
    O: Objective + ?Sized,
{
    let s = shaped(theta, scores, shape, objective);
    s.shape.iter().sum::<f64>() / s.shape.len() as f64
}

/// Central differences of `g(L̂(θ ± h e_j))`.
fn finite_difference<S, O>(
    theta: &NaturalParam,
    scores: &[Vec<f64>],
    shape: &S,
    objective: &O,
    fd_step: f64,
    g: impl Fn(f64) -> f64,
) -> Result<Vec<f64>>
where
    S: Fn(f64) -> f64 + ?Sized,
    O: Objective + ?Sized,
{
    let base = theta.to_vec();
    (0..base.len())
        .map(|j| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[j] += fd_step;
            minus[j] -= fd_step;
            let lp = l_hat(&NaturalParam::from_slice(&plus)?, scores, shape, objective);
            let lm = l_hat(&NaturalParam::from_slice(&minus)?, scores, shape, objective);
            Ok((g(lp) - g(lm)) / (2.0 * fd_step))
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = numeric.iter().map(|n| n.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        f64::INFINITY
    }
}

fn is_degenerate(shape: &[f64]) -> bool {
    let (lo, hi) = shape.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs())
}

fn check_inputs(mc_samples: usize, fd_step: f64) -> Result<()> {
    if mc_samples < 2 {
        return Err(invalid(format!("need at least 2 Monte Carlo samples, got {mc_samples}")));
    }
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(invalid(format!("finite-difference step must be positive, got {fd_step}")));
    }
    Ok(())
}

/// Self-normalized estimate of `E_p[T] − E_θ[T]` against the finite
/// difference of `ln L̂`.
pub fn check_gradient_l<S, O>(
    theta: &NaturalParam,
    shape: &S,
    objective: &O,
    mc_samples: usize,
    fd_step: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    S: Fn(f64) -> f64 + ?Sized,
    O: Objective + ?Sized,
{
    check_inputs(mc_samples, fd_step)?;
    let scores = common_scores(theta.dim(), mc_samples, seed);
    let sample = shaped(theta, &scores, shape, objective);
    let total: f64 = sample.shape.iter().sum();
    let e_theta = theta.expected_t().to_vec();
    let mut analytic = vec![0.0; e_theta.len()];
    for (x, s) in sample.points.iter().zip(&sample.shape) {
        for (a, t) in analytic.iter_mut().zip(sufficient_stats(x)) {
            *a += s / total * t;
        }
    }
    for (a, e) in analytic.iter_mut().zip(&e_theta) {
        *a -= e;
    }
    let numeric = finite_difference(theta, &scores, shape, objective, fd_step, f64::ln)?;
    Ok(GradCheckReport {
        relative_error: relative_error(&analytic, &numeric),
        analytic,
        numeric,
        samples_used: mc_samples,
        seed,
        l_hat: total / mc_samples as f64,
        inconclusive: is_degenerate(&sample.shape),
    })
}

/// Monte Carlo estimate of `E_θ[S T] − E_θ[S] E_θ[T]` against the finite
/// difference of `L̂`.
pub fn check_gradient_big_l<S, O>(
    theta: &NaturalParam,
    shape: &S,
    objective: &O,
    mc_samples: usize,
    fd_step: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    S: Fn(f64) -> f64 + ?Sized,
    O: Objective + ?Sized,
{
    check_inputs(mc_samples, fd_step)?;
    let scores = common_scores(theta.dim(), mc_samples, seed);
    let sample = shaped(theta, &scores, shape, objective);
    let m = mc_samples as f64;
    let mean_s = sample.shape.iter().sum::<f64>() / m;
    let e_theta = theta.expected_t().to_vec();
    let mut mean_st = vec![0.0; e_theta.len()];
    for (x, s) in sample.points.iter().zip(&sample.shape) {
        for (a, t) in mean_st.iter_mut().zip(sufficient_stats(x)) {
            *a += s * t / m;
        }
    }
    let analytic: Vec<f64> = mean_st.iter().zip(&e_theta).map(|(st, t)| st - mean_s * t).collect();
    let numeric = finite_difference(theta, &scores, shape, objective, fd_step, |v| v)?;
    Ok(GradCheckReport {
        relative_error: relative_error(&analytic, &numeric),
        analytic,
        numeric,
        samples_used: mc_samples,
        seed,
        l_hat: mean_s,
        inconclusive: is_degenerate(&sample.shape),
    })
}

/// Diagonal of the sampled `Var_θ[T]` against the closed form, at 5%.
pub fn check_hessian_second_term(theta: &NaturalParam, mc_samples: usize, seed: u64) -> Result<VarianceCheckReport> {
    if mc_samples < 2 {
        return Err(invalid(format!("need at least 2 Monte Carlo samples, got {mc_samples}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2 * theta.dim();
    let m = mc_samples as f64;
    let stats: Vec<Vec<f64>> = theta.sample(mc_samples, &mut rng).iter().map(|x| sufficient_stats(x)).collect();
    let mean: Vec<f64> = (0..d).map(|j| stats.iter().map(|t| t[j]).sum::<f64>() / m).collect();
    let sampled_diag: Vec<f64> = (0..d)
        .map(|j| stats.iter().map(|t| (t[j] - mean[j]).powi(2)).sum::<f64>() / (m - 1.0))
        .collect();
    let analytic_diag: Vec<f64> = theta.analytic_var_t().diagonal().iter().copied().collect();
    let max_relative_error = analytic_diag
        .iter()
        .zip(&sampled_diag)
        .map(|(a, s)| (a - s).abs() / a.abs())
        .fold(0.0, f64::max);
    Ok(VarianceCheckReport {
        analytic_diag,
        sampled_diag,
        max_relative_error,
        samples_used: mc_samples,
        seed,
        passed: max_relative_error < 0.05,
    })
}

/// Sample quantile of `H(x) = x` under a standard normal against
/// `Φ⁻¹(1 − ρ)`, averaged over `seeds` independent streams per size.
pub fn check_quantile_consistency(rho: f64, sizes: &[usize], seeds: usize, base_seed: u64) -> Result<QuantileCheckReport> {
    if sizes.is_empty() || seeds == 0 {
        return Err(invalid("quantile check needs at least one size and one seed"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(invalid(format!("sizes must be positive and increasing, got {sizes:?}")));
    }
    let target = standard_normal().inverse_cdf(1.0 - rho);
    let mut mean_abs_error = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut total = 0.0;
        for s in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_mul(1_000_003).wrapping_add(s as u64));
            let values: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            total += (sample_quantile(&values, rho)? - target).abs();
        }
        mean_abs_error.push(total / seeds as f64);
    }
    let decreasing = mean_abs_error.windows(2).all(|w| w[1] < w[0]);
    Ok(QuantileCheckReport { rho, target, sizes: sizes.to_vec(), mean_abs_error, seeds, decreasing })
}

/// Outcome line of the self-check suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Tolerance on the gradient checks.
pub const GRADIENT_TOLERANCE: f64 = 0.05;
/// Tolerance on the quantile check at the largest size.
pub const QUANTILE_TOLERANCE: f64 = 0.02;

/// The reference setting of the gradient checks: `H(x) = −x²`, `S = exp`,
/// one dimension with `μ = 0.3`, `σ² = 1`.
pub fn reference_setting() -> (NaturalParam, impl Fn(f64) -> f64, impl Objective) {
    let theta = NaturalParam::from_moments(&[0.3], &[1.0]).expect("valid reference θ");
    (theta, f64::exp, |x: &[f64]| -x[0] * x[0])
}

/// Runs the four checks at their reference settings.
pub fn run_self_check(seed: u64) -> Result<Vec<CheckOutcome>> {
    let (theta, shape, objective) = reference_setting();
    let mut out = Vec::new();

    for (name, report) in [
        ("gradient_l", check_gradient_l(&theta, &shape, &objective, 100_000, DEFAULT_FD_STEP, seed)?),
        ("gradient_L", check_gradient_big_l(&theta, &shape, &objective, 100_000, DEFAULT_FD_STEP, seed)?),
    ] {
        out.push(CheckOutcome {
            name,
            passed: !report.inconclusive && report.relative_error < GRADIENT_TOLERANCE,
            value: report.relative_error,
            tolerance: GRADIENT_TOLERANCE,
            detail: format!("analytic {:?} numeric {:?}", report.analytic, report.numeric),
        });
    }

    let unit = NaturalParam::from_moments(&[0.0], &[1.0]).expect("unit normal");
    let var = check_hessian_second_term(&unit, 1_000_000, seed)?;
    out.push(CheckOutcome {
        name: "hessian_var_term",
        passed: var.passed,
        value: var.max_relative_error,
        tolerance: 0.05,
        detail: format!("analytic {:?} sampled {:?}", var.analytic_diag, var.sampled_diag),
    });

    let q = check_quantile_consistency(0.1, &[1_000, 10_000, 100_000], 20, seed)?;
    let last = *q.mean_abs_error.last().expect("nonempty sizes");
    out.push(CheckOutcome {
        name: "quantile_consistency",
        passed: q.decreasing && last < QUANTILE_TOLERANCE,
        value: last,
        tolerance: QUANTILE_TOLERANCE,
        detail: format!("sizes {:?} mean |error| {:?}", q.sizes, q.mean_abs_error),
    });
    Ok(out)
}
