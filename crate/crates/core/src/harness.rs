//! Replicated experiments over benchmark problems: independent seeded runs,
//! summary statistics per (problem, algorithm), and CSV export of the
//! summary table and best-so-far curves.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{problem_with_dimension, Problem};
use crate::engine::{run, Algorithm, CurvePoint, EngineConfig, ProjectionBox};
use crate::error::{invalid, GassError, Result};
use crate::shaping::LowerBoundPolicy;

pub const RESULTS_FILE: &str = "results.csv";
pub const CURVES_FILE: &str = "curves.csv";

/// Initial means are drawn uniformly from `[-30, 30]ⁿ`.
pub const INIT_MEAN_RANGE: (f64, f64) = (-30.0, 30.0);
/// Initial per-coordinate variance.
pub const INIT_VARIANCE: f64 = 1000.0;

/// Optional replacements for problem or global defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamOverrides {
    pub rho: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha_exp: Option<f64>,
    pub epsilon: Option<f64>,
    pub feedback_c: Option<f64>,
    pub s0: Option<f64>,
    pub n_per_iter: Option<usize>,
}

impl ParamOverrides {
    /// Fields set in `self` win over those in `fallback`.
    pub fn or(self, fallback: ParamOverrides) -> ParamOverrides {
        ParamOverrides {
            rho: self.rho.or(fallback.rho),
            alpha0: self.alpha0.or(fallback.alpha0),
            alpha_exp: self.alpha_exp.or(fallback.alpha_exp),
            epsilon: self.epsilon.or(fallback.epsilon),
            feedback_c: self.feedback_c.or(fallback.feedback_c),
            s0: self.s0.or(fallback.s0),
            n_per_iter: self.n_per_iter.or(fallback.n_per_iter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEntry {
    pub name: String,
    /// Reduced dimension; `None` keeps the native one.
    pub dimension: Option<usize>,
}

impl ProblemEntry {
    pub fn new(name: impl Into<String>, dimension: Option<usize>) -> Self {
        ProblemEntry { name: name.into(), dimension }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub problems: Vec<ProblemEntry>,
    pub algorithms: Vec<Algorithm>,
    pub runs: usize,
    pub budget: usize,
    pub base_seed: u64,
    /// Applied to every problem.
    pub overrides: ParamOverrides,
    /// Keyed by problem name; wins over `overrides`.
    pub problem_overrides: BTreeMap<String, ParamOverrides>,
    /// Worker threads; `None` uses one per processor.
    pub workers: Option<usize>,
}

impl ExperimentPlan {
    /// Desk-scale plan: 10 runs of 10⁶ evaluations each.
    pub fn desk(problems: Vec<ProblemEntry>, algorithms: Vec<Algorithm>, base_seed: u64) -> Self {
        ExperimentPlan {
            problems,
            algorithms,
            runs: 10,
            budget: 1_000_000,
            base_seed,
            overrides: ParamOverrides::default(),
            problem_overrides: BTreeMap::new(),
            workers: None,
        }
    }

    /// 100 runs per problem at native dimension.
    pub fn full_scale(algorithms: Vec<Algorithm>, budget: usize, base_seed: u64) -> Self {
        let problems = crate::benchmarks::PROBLEM_NAMES.iter().map(|n| ProblemEntry::new(*n, None)).collect();
        ExperimentPlan { runs: 100, budget, ..Self::desk(problems, algorithms, base_seed) }
    }

    fn overrides_for(&self, name: &str) -> ParamOverrides {
        self.problem_overrides.get(name).copied().unwrap_or_default().or(self.overrides)
    }
}

/// Engine configuration for a benchmark: 1000 samples per iteration,
/// `α_k = α₀/k^0.05`, `S₀ = 10⁵`, plus the problem's `ρ`, `α₀` and `c`.
pub fn configure(problem: &Problem, algorithm: Algorithm, budget: usize, overrides: &ParamOverrides) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::new(algorithm, problem.dimension, problem.radius(), budget)?;
    cfg.projection = ProjectionBox::for_radius(problem.dimension, problem.radius())?;
    cfg.shape.rho = overrides.rho.unwrap_or(problem.defaults.rho);
    cfg.shape.s0 = overrides.s0.unwrap_or(1e5);
    cfg.shape.lower_bound = LowerBoundPolicy::BatchMinMinus(0.01);
    cfg.schedules.alpha0 = overrides.alpha0.unwrap_or(problem.defaults.alpha0);
    cfg.schedules.alpha_exp = overrides.alpha_exp.unwrap_or(0.05);
    cfg.schedules.n0 = overrides.n_per_iter.unwrap_or(1000);
    cfg.schedules.zeta = 0.0;
    cfg.feedback_c = overrides.feedback_c.unwrap_or(problem.defaults.feedback_c);
    cfg.epsilon = overrides.epsilon.unwrap_or(1e-8);
    cfg.validate()?;
    Ok(cfg)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed for one run, a pure function of the base seed and the run's labels.
pub fn derive_seed(base_seed: u64, labels: &[&str], run_id: u64) -> u64 {
    let mut h = splitmix64(base_seed);
    for label in labels {
        h = splitmix64(h ^ fnv1a(label.as_bytes()));
    }
    splitmix64(h ^ splitmix64(run_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub problem: String,
    pub dimension: usize,
    pub algorithm: Algorithm,
    pub run_id: usize,
    pub seed: u64,
    pub budget: usize,
    pub h_star: f64,
    pub best_value: f64,
    pub best_solution: Vec<f64>,
    pub evals_used: usize,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub problem: String,
    pub dimension: usize,
    pub algorithm: Algorithm,
    pub run_id: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResults {
    pub reports: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
}

struct Task {
    problem: Problem,
    config: EngineConfig,
    run_id: usize,
    seed: u64,
}

/// Runs every (problem, algorithm, run) of the plan. Results come back in
/// plan order regardless of worker count; failed runs are kept with their
/// error message.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResults> {
    if plan.runs == 0 {
        return Err(invalid("plan needs at least one run"));
    }
    if plan.problems.is_empty() || plan.algorithms.is_empty() {
        return Err(invalid("plan needs at least one problem and one algorithm"));
    }
    let mut tasks = Vec::new();
    for entry in &plan.problems {
        let problem = problem_with_dimension(&entry.name, entry.dimension)?;
        let dim_label = problem.dimension.to_string();
        let overrides = plan.overrides_for(problem.name);
        for &algorithm in &plan.algorithms {
            let config = configure(&problem, algorithm, plan.budget, &overrides)?;
            for run_id in 0..plan.runs {
                let seed = derive_seed(plan.base_seed, &[problem.name, &dim_label, algorithm.name()], run_id as u64);
                tasks.push(Task { problem: problem.clone(), config: config.clone(), run_id, seed });
            }
        }
    }

    let execute = |t: &Task| -> std::result::Result<TrialReport, TrialFailure> {
        let mut init = ChaCha8Rng::seed_from_u64(derive_seed(t.seed, &["initial-mean"], 0));
        let (lo, hi) = INIT_MEAN_RANGE;
        let mean0: Vec<f64> = (0..t.problem.dimension).map(|_| init.random_range(lo..hi)).collect();
        let var0 = vec![INIT_VARIANCE; t.problem.dimension];
        match run(&t.config, &t.problem, &mean0, &var0, t.seed) {
            Ok(r) => Ok(TrialReport {
                problem: t.problem.name.to_string(),
                dimension: t.problem.dimension,
                algorithm: t.config.algorithm,
                run_id: t.run_id,
                seed: t.seed,
                budget: t.config.budget,
                h_star: t.problem.h_star,
                best_value: r.best_value,
                best_solution: r.best_solution,
                evals_used: r.evals_used,
                curve: r.curve,
            }),
            Err(e) => Err(TrialFailure {
                problem: t.problem.name.to_string(),
                dimension: t.problem.dimension,
                algorithm: t.config.algorithm,
                run_id: t.run_id,
                seed: t.seed,
                error: e.to_string(),
            }),
        }
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = plan.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| tasks.par_iter().map(execute).collect());

    let mut results = ExperimentResults::default();
    for outcome in outcomes {
        match outcome {
            Ok(r) => results.reports.push(r),
            Err(f) => results.failures.push(f),
        }
    }
    Ok(results)
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub problem: String,
    pub algorithm: Algorithm,
    pub dimension: usize,
    pub runs: usize,
    pub budget: usize,
    #[serde(rename = "H_star")]
    pub h_star: f64,
    /// Mean of the final best values.
    #[serde(rename = "H_bar_star")]
    pub h_bar_star: f64,
    /// Sample standard deviation over `√R`; zero for a single run.
    pub std_err: f64,
    pub eps: f64,
    /// Runs with `H* − best ≤ eps`.
    #[serde(rename = "M_eps")]
    pub m_eps: usize,
}

/// Summary of one group of runs that share problem, dimension and algorithm.
pub fn aggregate_group(reports: &[&TrialReport], eps: f64) -> Result<AggregateRow> {
    let first = reports.first().ok_or(GassError::EmptyInput("aggregate group"))?;
    let r = reports.len() as f64;
    let mean = reports.iter().map(|t| t.best_value).sum::<f64>() / r;
    let std_err = if reports.len() > 1 {
        let ss: f64 = reports.iter().map(|t| (t.best_value - mean).powi(2)).sum();
        (ss / (r - 1.0)).sqrt() / r.sqrt()
    } else {
        0.0
    };
    let m_eps = reports.iter().filter(|t| t.h_star - t.best_value <= eps).count();
    Ok(AggregateRow {
        problem: first.problem.clone(),
        algorithm: first.algorithm,
        dimension: first.dimension,
        runs: reports.len(),
        budget: first.budget,
        h_star: first.h_star,
        h_bar_star: mean,
        std_err,
        eps,
        m_eps,
    })
}

/// Groups reports by (problem, dimension, algorithm) in first-appearance
/// order. `eps` maps a problem name to its tolerance.
pub fn aggregate(reports: &[TrialReport], eps: &BTreeMap<String, f64>) -> Result<Vec<AggregateRow>> {
    let mut order: Vec<(String, usize, Algorithm)> = Vec::new();
    let mut groups: BTreeMap<(String, usize, Algorithm), Vec<&TrialReport>> = BTreeMap::new();
    for t in reports {
        let key = (t.problem.clone(), t.dimension, t.algorithm);
        groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        }).push(t);
    }
    order
        .into_iter()
        .map(|key| {
            let tol = *eps
                .get(&key.0)
                .ok_or_else(|| invalid(format!("no epsilon tolerance given for problem '{}'", key.0)))?;
            aggregate_group(&groups[&key], tol)
        })
        .collect()
}

/// Registry tolerances for every problem that appears in `reports`.
pub fn default_eps(reports: &[TrialReport]) -> BTreeMap<String, f64> {
    reports
        .iter()
        .filter_map(|t| crate::benchmarks::get_problem(&t.problem).ok())
        .map(|p| (p.name.to_string(), p.defaults.eps_tolerance))
        .collect()
}

#[derive(Serialize)]
struct CurveRow<'a> {
    problem: &'a str,
    algorithm: Algorithm,
    run_id: usize,
    seed: u64,
    cum_evals: usize,
    best_so_far: f64,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> GassError + '_ {
    move |source| GassError::Csv { path: path.to_path_buf(), source }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GassError + '_ {
    move |source| GassError::Io { path: path.to_path_buf(), source }
}

fn write_results(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(["problem", "algorithm", "dimension", "runs", "budget", "H_star", "H_bar_star", "std_err", "eps", "M_eps"])
        .map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_curves(path: &Path, reports: &[TrialReport]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(["problem", "algorithm", "run_id", "seed", "cum_evals", "best_so_far"])
        .map_err(csv_err(path))?;
    for t in reports {
        for p in &t.curve {
            w.serialize(CurveRow {
                problem: &t.problem,
                algorithm: t.algorithm,
                run_id: t.run_id,
                seed: t.seed,
                cum_evals: p.cum_evals,
                best_so_far: p.best_so_far,
            })
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Writes `results.csv` and `curves.csv` into `dir` and returns their paths.
/// Curve rows follow the order of `reports`.
pub fn export_results(rows: &[AggregateRow], reports: &[TrialReport], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let results = dir.join(RESULTS_FILE);
    let curves = dir.join(CURVES_FILE);
    write_results(&results, rows)?;
    write_curves(&curves, reports)?;
    Ok((results, curves))
}

pub fn read_results(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err(path))
}
