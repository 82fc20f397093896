//! The search loop.
//!
//! Each iteration samples a batch from the current Gaussian, weights it with
//! the quantile shape function, and moves the natural parameters along
//! `(V̂ + εI)⁻¹ (Ê_p[T] − E_θ[T])`, where `V̂` is the sample covariance of the
//! sufficient statistics. The averaged variant adds a pull `c (θ̄ − θ)` towards
//! the running mean of past iterates; the modified cross-entropy baseline uses
//! the raw difference `Ê_p[T] − E_θ[T]` as a stochastic-approximation step on
//! the moments.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GassError, Result};
use crate::model::{sufficient_stats, MeanMoments, NaturalParam};
use crate::shaping::{weigh_batch, ShapeSpec, WeightedValues};

/// A black-box function to maximize.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gass,
    GassAvg,
    ModifiedCe,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Gass, Algorithm::GassAvg, Algorithm::ModifiedCe];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gass => "gass",
            Algorithm::GassAvg => "gass_avg",
            Algorithm::ModifiedCe => "modified_ce",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = GassError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gass" => Ok(Algorithm::Gass),
            "gass_avg" => Ok(Algorithm::GassAvg),
            "modified_ce" | "ce" => Ok(Algorithm::ModifiedCe),
            _ => Err(invalid(format!("unknown algorithm '{s}' (expected gass, gass_avg, modified_ce)"))),
        }
    }
}

/// How `Var_θ[T(X)]` is obtained for the preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    #[default]
    SampleEstimate,
    Analytic,
}

/// Step-size rule `α_k = α₀ / max(1,k)^a` and sample-size rule
/// `N_k = ⌈N₀ · max(1,k)^ζ⌉`, with `k` counted from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub alpha0: f64,
    pub alpha_exp: f64,
    pub n0: usize,
    pub zeta: f64,
}

impl Default for Schedules {
    fn default() -> Self {
        Schedules { alpha0: 1.0, alpha_exp: 0.05, n0: 1000, zeta: 0.0 }
    }
}

impl Schedules {
    pub fn step_size(&self, k: usize) -> f64 {
        self.alpha0 / (k.max(1) as f64).powf(self.alpha_exp)
    }

    pub fn sample_size(&self, k: usize) -> usize {
        (self.n0 as f64 * (k.max(1) as f64).powf(self.zeta)).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(invalid(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.alpha_exp > 0.0 && self.alpha_exp <= 1.0) {
            return Err(invalid(format!("alpha_exp must lie in (0, 1], got {}", self.alpha_exp)));
        }
        if self.n0 < 2 {
            return Err(invalid(format!("n0 must be at least 2, got {}", self.n0)));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(invalid(format!("zeta must be nonnegative, got {}", self.zeta)));
        }
        Ok(())
    }
}

/// Gain `scale / (k + shift)^exp` of the modified cross-entropy baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeGain {
    pub scale: f64,
    pub shift: f64,
    pub exp: f64,
}

impl Default for CeGain {
    fn default() -> Self {
        CeGain { scale: 5.0, shift: 100.0, exp: 0.501 }
    }
}

impl CeGain {
    pub fn at(&self, k: usize) -> f64 {
        self.scale / (k as f64 + self.shift).powf(self.exp)
    }
}

/// Hyper-rectangle in natural-parameter space onto which every iterate is clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ProjectionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(GassError::DimensionMismatch { expected: lower.len(), actual: upper.len() });
        }
        if lower.is_empty() || !lower.len().is_multiple_of(2) {
            return Err(invalid(format!("projection box needs an even, nonzero length, got {}", lower.len())));
        }
        let n = lower.len() / 2;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(format!("projection bound {i} is not a finite interval: [{lo}, {hi}]")));
            }
            if i >= n && *hi >= 0.0 {
                return Err(invalid(format!("quadratic upper bound {i} must be negative, got {hi}")));
            }
        }
        Ok(ProjectionBox { lower, upper })
    }

    /// Box from moment bounds: `|μ_i| ≤ mean_bound` and
    /// `σ_i² ∈ [var_min, var_max]`.
    pub fn from_moment_bounds(n: usize, mean_bound: f64, var_min: f64, var_max: f64) -> Result<Self> {
        if !(mean_bound > 0.0 && var_min > 0.0 && var_min < var_max) {
            return Err(invalid(format!(
                "bad moment bounds: mean {mean_bound}, variance [{var_min}, {var_max}]"
            )));
        }
        let lin = mean_bound / var_min;
        let mut lower = vec![-lin; n];
        let mut upper = vec![lin; n];
        lower.extend(std::iter::repeat_n(-0.5 / var_min, n));
        upper.extend(std::iter::repeat_n(-0.5 / var_max, n));
        Self::new(lower, upper)
    }

    /// Default box for a search region of the given radius: means within
    /// ten radii, variances in `[1e-8, 1e6]`.
    pub fn for_radius(n: usize, radius: f64) -> Result<Self> {
        Self::from_moment_bounds(n, 10.0 * radius, 1e-8, 1e6)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len() / 2
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.lower.len()
            && theta.iter().zip(self.lower.iter().zip(&self.upper)).all(|(t, (lo, hi))| lo <= t && t <= hi)
    }

    /// Closest point of the box in Euclidean norm (componentwise clamp).
    /// NaN components are sent to the lower bound.
    pub fn clamp(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (lo, hi))| if t.is_nan() { *lo } else { t.clamp(*lo, *hi) })
            .collect()
    }

    pub fn project(&self, theta: &NaturalParam) -> NaturalParam {
        self.project_raw(&theta.to_vec()).expect("box upper bounds keep quadratics negative")
    }

    pub fn project_raw(&self, theta: &[f64]) -> Result<NaturalParam> {
        if theta.len() != self.lower.len() {
            return Err(GassError::DimensionMismatch { expected: self.lower.len(), actual: theta.len() });
        }
        NaturalParam::from_slice(&self.clamp(theta))
    }
}

/// One iteration's candidates and their objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub solutions: Vec<Vec<f64>>,
    pub h_values: Vec<f64>,
    pub weighted: Option<WeightedValues>,
}

impl SampleBatch {
    pub fn new(solutions: Vec<Vec<f64>>, h_values: Vec<f64>) -> Result<Self> {
        if solutions.len() != h_values.len() {
            return Err(GassError::DimensionMismatch { expected: solutions.len(), actual: h_values.len() });
        }
        if let Some(i) = h_values.iter().position(|h| !h.is_finite()) {
            return Err(GassError::NonFiniteObjective { point: solutions[i].clone(), value: h_values[i] });
        }
        Ok(SampleBatch { solutions, h_values, weighted: None })
    }

    /// Attaches quantile-shape weights.
    pub fn weigh(&mut self, shape: &ShapeSpec) -> Result<&WeightedValues> {
        let w = weigh_batch(&self.h_values, shape)?;
        Ok(self.weighted.insert(w))
    }

    pub fn len(&self) -> usize {
        self.h_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_values.is_empty()
    }
}

/// `Σ_i w_i T(x_i)`.
pub fn estimate_ep(batch: &SampleBatch) -> Result<Vec<f64>> {
    let weighted = batch
        .weighted
        .as_ref()
        .ok_or_else(|| invalid("batch has no weights attached"))?;
    let dim = batch.solutions.first().ok_or(GassError::EmptyInput("batch"))?.len();
    let mut acc = vec![0.0; 2 * dim];
    for (x, w) in batch.solutions.iter().zip(&weighted.weights) {
        for (j, xj) in x.iter().enumerate() {
            acc[j] += w * xj;
            acc[dim + j] += w * xj * xj;
        }
    }
    Ok(acc)
}

/// Unbiased sample covariance of `T(x_i)`:
/// `(1/(N−1)) Σ T Tᵀ − (1/(N²−N)) (Σ T)(Σ T)ᵀ`.
///
/// The statistics are shifted by `T(x_1)` before accumulating; the estimator
/// is shift-invariant, and the shift avoids cancellation once the batch is
/// concentrated far from the origin.
pub fn estimate_var_t(batch: &SampleBatch) -> Result<DMatrix<f64>> {
    let n_samples = batch.solutions.len();
    if n_samples < 2 {
        return Err(invalid(format!("variance estimate needs at least 2 samples, got {n_samples}")));
    }
    let reference = sufficient_stats(&batch.solutions[0]);
    let d = reference.len();
    let mut shifted = DMatrix::zeros(n_samples, d);
    for (i, x) in batch.solutions.iter().enumerate() {
        for (j, t) in sufficient_stats(x).into_iter().enumerate() {
            shifted[(i, j)] = t - reference[j];
        }
    }
    Ok(raw_var_formula(&shifted))
}

/// The estimator applied to the rows of `t` as given.
pub(crate) fn raw_var_formula(t: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows() as f64;
    let sums: DVector<f64> = t.row_sum().transpose();
    let mut v = t.tr_mul(t) / (n - 1.0);
    v -= (&sums * sums.transpose()) / (n * n - n);
    // Exact symmetry; the products above agree only up to rounding.
    
    (&v + v.transpose()) * 0.5
}

/// Solves `(V + εI) d = e_p − e_θ` by Cholesky, retrying once with `10ε`.
pub fn ascent_direction(var_t: &DMatrix<f64>, epsilon: f64, e_p: &[f64], e_theta: &[f64]) -> Result<Vec<f64>> {
    let d = var_t.nrows();
    if var_t.ncols() != d {
        return Err(GassError::DimensionMismatch { expected: d, actual: var_t.ncols() });
    }
    if e_p.len() != d || e_theta.len() != d {
        return Err(GassError::DimensionMismatch { expected: d, actual: e_p.len().min(e_theta.len()) });
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let rhs = DVector::from_iterator(d, e_p.iter().zip(e_theta).map(|(p, t)| p - t));
    for eps in [epsilon, 10.0 * epsilon] {
        let m = var_t + DMatrix::identity(d, d) * eps;
        if let Some(chol) = m.cholesky() {
            let sol = chol.solve(&rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Ok(sol.as_slice().to_vec());
            }
        }
    }
    Err(GassError::Factorization {
        dim: d,
        epsilon,
        retry_epsilon: 10.0 * epsilon,
        min_diag: var_t.diagonal().min(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub algorithm: Algorithm,
    /// Regularizer `ε` added to the preconditioner diagonal.
    pub epsilon: f64,
    /// Feedback weight `c` of the averaged variant.
    pub feedback_c: f64,
    pub shape: ShapeSpec,
    pub schedules: Schedules,
    pub ce_gain: CeGain,
    pub projection: ProjectionBox,
    /// Total objective evaluations allowed.
    pub budget: usize,
    pub variance_mode: VarianceMode,
    /// When set, candidates are clamped to these per-coordinate bounds before
    /// evaluation. The stored sample itself is not modified.
    pub eval_clamp: Option<Vec<(f64, f64)>>,
    /// Evaluate each batch on the rayon pool.
    pub parallel_eval: bool,
}

impl EngineConfig {
    /// Defaults for an `n`-dimensional search region of the given radius.
    pub fn new(algorithm: Algorithm, n: usize, radius: f64, budget: usize) -> Result<Self> {
        Ok(EngineConfig {
            algorithm,
            epsilon: 1e-8,
            feedback_c: 0.1,
            shape: ShapeSpec::default(),
            schedules: Schedules::default(),
            ce_gain: CeGain::default(),
            projection: ProjectionBox::for_radius(n, radius)?,
            budget,
            variance_mode: VarianceMode::default(),
            eval_clamp: None,
            parallel_eval: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.feedback_c >= 0.0 && self.feedback_c.is_finite()) {
            return Err(invalid(format!("feedback c must be nonnegative, got {}", self.feedback_c)));
        }
        self.shape.validate()?;
        self.schedules.validate()?;
        if let Some(bounds) = &self.eval_clamp {
            if bounds.len() != self.projection.dim() {
                return Err(GassError::DimensionMismatch { expected: self.projection.dim(), actual: bounds.len() });
            }
        }
        let first = self.schedules.sample_size(0);
        if self.budget < first {
            return Err(GassError::BudgetTooSmall { budget: self.budget, batch: first });
        }
        Ok(())
    }
}

/// Point on a best-so-far curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cum_evals: usize,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub theta: NaturalParam,
    /// Mean of `θ_1..θ_k`; equal to `θ_0` before the first step.
    pub theta_bar: NaturalParam,
    pub iteration: usize,
    pub evals_used: usize,
    pub best_solution: Vec<f64>,
    pub best_value: f64,
    pub curve: Vec<CurvePoint>,
}

impl EngineState {
    pub fn new(theta: NaturalParam) -> Self {
        let n = theta.dim();
        EngineState {
            theta_bar: theta.clone(),
            theta,
            iteration: 0,
            evals_used: 0,
            best_solution: vec![f64::NAN; n],
            best_value: f64::NEG_INFINITY,
            curve: Vec::new(),
        }
    }
}

/// Draws and evaluates the batch for the current iteration and records it in
/// the best-so-far trace.
fn draw_batch<O, R>(state: &mut EngineState, objective: &O, config: &EngineConfig, rng: &mut R) -> Result<SampleBatch>
where
    O: Objective + ?Sized,
    R: rand::Rng + ?Sized,
{
    let n_k = config.schedules.sample_size(state.iteration);
    let remaining = config.budget.saturating_sub(state.evals_used);
    if remaining < n_k {
        return Err(GassError::BudgetTooSmall { budget: remaining, batch: n_k });
    }
    let solutions = state.theta.sample(n_k, rng);
    let eval = |x: &Vec<f64>| match &config.eval_clamp {
        Some(bounds) => {
            let clamped: Vec<f64> = x.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
            objective.evaluate(&clamped)
        }
        None => objective.evaluate(x),
    };
    let h_values: Vec<f64> = if config.parallel_eval {
        solutions.par_iter().map(eval).collect()
    } else {
        solutions.iter().map(eval).collect()
    };
    let batch = SampleBatch::new(solutions, h_values)?;

    let (best_i, best_h) = batch
        .h_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, h)| if h > acc.1 { (i, h) } else { acc });
    if best_h > state.best_value {
        state.best_value = best_h;
        state.best_solution = batch.solutions[best_i].clone();
    }
    state.evals_used += n_k;
    state.curve.push(CurvePoint { cum_evals: state.evals_used, best_so_far: state.best_value });
    Ok(batch)
}

/// Commits `θ_{k+1}` and the running average `θ̄_{k+1} = (k θ̄_k + θ_{k+1}) / (k+1)`.
fn commit(state: &mut EngineState, next: NaturalParam) {
    let k = state.iteration as f64;
    let avg: Vec<f64> = state
        .theta_bar
        .to_vec()
        .iter()
        .zip(next.to_vec())
        .map(|(bar, t)| (k / (k + 1.0)) * bar + t / (k + 1.0))
        .collect();
    // The box is convex, so the average of projected iterates stays valid.
    state.theta_bar = NaturalParam::from_slice(&avg).expect("average of valid parameters");
    state.theta = next;
    state.iteration += 1;
}

/// Preconditioned direction `(V̂ + εI)⁻¹ (Ê_p[T] − E_θ[T])` for a weighted batch.
pub fn gass_direction(batch: &SampleBatch, theta: &NaturalParam, config: &EngineConfig) -> Result<Vec<f64>> {
    let e_p = estimate_ep(batch)?;
    let e_theta = theta.expected_t().to_vec();
    let var = match config.variance_mode {
        VarianceMode::SampleEstimate => estimate_var_t(batch)?,
        VarianceMode::Analytic => theta.analytic_var_t(),
    };
    ascent_direction(&var, config.epsilon, &e_p, &e_theta)
}

/// Unpreconditioned direction `Ê_p[T] − E_θ[T]`.
pub fn moment_direction(batch: &SampleBatch, theta: &NaturalParam) -> Result<Vec<f64>> {
    let e_p = estimate_ep(batch)?;
    let e_theta = theta.expected_t().to_vec();
    Ok(e_p.iter().zip(&e_theta).map(|(p, t)| p - t).collect())
}

fn preconditioned_step<O, R>(
    state: &mut EngineState,
    objective: &O,
    config: &EngineConfig,
    rng: &mut R,
    feedback_c: f64,
) -> Result<SampleBatch>
where
    O: Objective + ?Sized,
    R: rand::Rng + ?Sized,
{
    let mut batch = draw_batch(state, objective, config, rng)?;
    batch.weigh(&config.shape)?;
    let direction = gass_direction(&batch, &state.theta, config)?;
    let alpha = config.schedules.step_size(state.iteration);
    let theta = state.theta.to_vec();
    let bar = state.theta_bar.to_vec();
    let raw: Vec<f64> = theta
        .iter()
        .zip(&direction)
        .zip(&bar)
        .map(|((t, d), b)| t + alpha * d + alpha * feedback_c * (b - t))
        .collect();
    let next = config.projection.project_raw(&raw)?;
    commit(state, next);
    Ok(batch)
}

/// One iteration of the plain preconditioned search. Returns the batch used.
pub fn step_gass<O, R>(state: &mut EngineState, objective: &O, config: &EngineConfig, rng: &mut R) -> Result<SampleBatch>
where
    O: Objective + ?Sized,
    R: rand::Rng + ?Sized,
{
    preconditioned_step(state, objective, config, rng, 0.0)
}

/// One iteration with averaging feedback `α_k c (θ̄_k − θ_k)`.
pub fn step_gass_avg<O, R>(state: &mut EngineState, objective: &O, config: &EngineConfig, rng: &mut R) -> Result<SampleBatch>
where
    O: Objective + ?Sized,
    R: rand::Rng + ?Sized,
{
    preconditioned_step(state, objective, config, rng, config.feedback_c)
}

/// One iteration of the modified cross-entropy baseline: the moments move as
/// `η_{k+1} = η_k + a_k (Ê_p[T] − η_k)` with `η_k = E_θk[T]` and
/// `a_k = 5/(k+100)^0.501`, then map back to natural parameters and project.
pub fn step_modified_ce<O, R>(state: &mut EngineState, objective: &O, config: &EngineConfig, rng: &mut R) -> Result<SampleBatch>
where
    O: Objective + ?Sized,
    R: rand::Rng + ?Sized,
{
    let mut batch = draw_batch(state, objective, config, rng)?;
    batch.weigh(&config.shape)?;
    let direction = moment_direction(&batch, &state.theta)?;
    let gain = config.ce_gain.at(state.iteration);
    let eta: Vec<f64> = state
        .theta
        .expected_t()
        .to_vec()
        .iter()
        .zip(&direction)
        .map(|(e, d)| e + gain * d)
        .collect();
    let moments = MeanMoments::from_slice(&eta)?;
    let variance: Vec<f64> = moments.first.iter().zip(&moments.second).map(|(m, s)| s - m * m).collect();
    let raw = NaturalParam::from_moments(&moments.first, &variance)?;
    let next = config.projection.project(&raw);
    commit(state, next);
    Ok(batch)
}

pub fn step<O, R>(state: &mut EngineState, objective: &O, config: &EngineConfig, rng: &mut R) -> Result<SampleBatch>
where
    O: Objective + ?Sized,
    R: rand::Rng + ?Sized,
{
    match config.algorithm {
        Algorithm::Gass => step_gass(state, objective, config, rng),
        Algorithm::GassAvg => step_gass_avg(state, objective, config, rng),
        Algorithm::ModifiedCe => step_modified_ce(state, objective, config, rng),
    }
}

/// Outcome of a single optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub best_value: f64,
    pub best_solution: Vec<f64>,
    pub evals_used: usize,
    pub iterations: usize,
    pub curve: Vec<CurvePoint>,
    pub final_theta: NaturalParam,
}

/// Iterates until the next batch would exceed the evaluation budget.
pub fn run<O>(config: &EngineConfig, objective: &O, mean0: &[f64], var0: &[f64], seed: u64) -> Result<RunReport>
where
    O: Objective + ?Sized,
{
    config.validate()?;
    if mean0.len() != config.projection.dim() {
        return Err(GassError::DimensionMismatch { expected: config.projection.dim(), actual: mean0.len() });
    }
    let theta0 = NaturalParam::from_moments(mean0, var0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = EngineState::new(theta0);
    while state.evals_used + config.schedules.sample_size(state.iteration) <= config.budget {
        step(&mut state, objective, config, &mut rng)?;
    }
    Ok(RunReport {
        seed,
        best_value: state.best_value,
        best_solution: state.best_solution,
        evals_used: state.evals_used,
        iterations: state.iteration,
        curve: state.curve,
        final_theta: state.theta,
    })
}
