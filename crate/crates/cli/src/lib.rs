//! Argument parsing and command execution for the `gass` binary.
//!
//! Values resolve in the order: command-line flag, config-file entry,
//! problem default, global default.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gass::benchmarks::{all_problems, problem_with_dimension};
use gass::diagnostics::run_self_check;
use gass::harness::{aggregate, default_eps, export_results, run_experiment, ExperimentPlan, ParamOverrides, ProblemEntry};
use gass::Algorithm;
use serde::Deserialize;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "GASS_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "gass-output";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECK_FAILURE: i32 = 3;

const DESK_RUNS: usize = 10;
const FULL_RUNS: usize = 100;
const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "gass", version, about = "Gradient-based adaptive stochastic search", subcommand_required = true, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Optimize a single benchmark problem once.
    Run(RunArgs),
    /// Replicated runs over several problems and algorithms; writes CSVs.
    Suite(SuiteArgs),
    /// Numerical self-checks.
    Check(CheckArgs),
    /// List the benchmark problems.
    List,
}

#[derive(Debug, Args, Default)]
struct ParamArgs {
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    alpha_exp: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Feedback weight of gass_avg.
    #[arg(long = "c", alias = "feedback-c")]
    c: Option<f64>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    n_per_iter: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write results.csv and curves.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    /// Comma-separated problem names.
    #[arg(long, value_delimiter = ',')]
    problems: Option<Vec<String>>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// 100 runs per problem at native dimension.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Config-file schema; keys mirror the flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub problems: Option<Vec<String>>,
    pub algo: Option<String>,
    pub algos: Option<Vec<String>>,
    pub dim: Option<usize>,
    pub runs: Option<usize>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub full_scale: Option<bool>,
    pub rho: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha_exp: Option<f64>,
    pub epsilon: Option<f64>,
    pub c: Option<f64>,
    pub s0: Option<f64>,
    pub n_per_iter: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    fn params(&self) -> ParamOverrides {
        ParamOverrides {
            rho: self.rho,
            alpha0: self.alpha0,
            alpha_exp: self.alpha_exp,
            epsilon: self.epsilon,
            feedback_c: self.c,
            s0: self.s0,
            n_per_iter: self.n_per_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Run { out: Option<PathBuf> },
    Suite { out: PathBuf },
    Check { seed: u64 },
    List,
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    /// Experiment to execute; `None` for `check` and `list`.
    pub plan: Option<ExperimentPlan>,
}

#[derive(Debug)]
pub enum CliError {
    Clap(clap::Error),
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) if !e.use_stderr() => EXIT_OK,
            _ => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Clap(e) => write!(f, "{e}"),
            CliError::Usage(msg) => write!(f, "error: {msg}\n\nFor more information, try '--help'."),
        }
    }
}

impl std::error::Error for CliError {}

impl ParamArgs {
    fn overrides(&self) -> ParamOverrides {
        ParamOverrides {
            rho: self.rho,
            alpha0: self.alpha0,
            alpha_exp: self.alpha_exp,
            epsilon: self.epsilon,
            feedback_c: self.c,
            s0: self.s0,
            n_per_iter: self.n_per_iter,
        }
    }
}

fn validate_overrides(o: &ParamOverrides) -> Result<(), CliError> {
    let bad = |name: &str, v: String, range: &str| Err(CliError::Usage(format!("--{name} {v} is outside {range}")));
    if let Some(v) = o.rho {
        if !(v > 0.0 && v < 1.0) {
            return bad("rho", v.to_string(), "(0, 1)");
        }
    }
    if let Some(v) = o.alpha0 {
        if !(v > 0.0 && v.is_finite()) {
            return bad("alpha0", v.to_string(), "(0, inf)");
        }
    }
    if let Some(v) = o.alpha_exp {
        if !(v > 0.0 && v <= 1.0) {
            return bad("alpha-exp", v.to_string(), "(0, 1]");
        }
    }
    if let Some(v) = o.epsilon {
        if !(v > 0.0 && v.is_finite()) {
            return bad("epsilon", v.to_string(), "(0, inf)");
        }
    }
    if let Some(v) = o.feedback_c {
        if !(v >= 0.0 && v.is_finite()) {
            return bad("c", v.to_string(), "[0, inf)");
        }
    }
    if let Some(v) = o.s0 {
        if !(v > 0.0 && v.is_finite()) {
            return bad("s0", v.to_string(), "(0, inf)");
        }
    }
    if let Some(v) = o.n_per_iter {
        if v < 2 {
            return bad("n-per-iter", v.to_string(), "[2, inf)");
        }
    }
    Ok(())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, CliError> {
    s.parse::<Algorithm>().map_err(|e| CliError::Usage(e.to_string()))
}

fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    path.as_deref().map(FileConfig::load).transpose().map(Option::unwrap_or_default)
}

fn check_problems(entries: &[ProblemEntry]) -> Result<(), CliError> {
    for e in entries {
        problem_with_dimension(&e.name, e.dimension).map_err(|err| CliError::Usage(err.to_string()))?;
    }
    Ok(())
}

/// Parses `argv` (including the program name) into a resolved config.
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    match cli.command {
        CommandArgs::List => Ok(CliConfig { command: Command::List, plan: None }),
        CommandArgs::Check(a) => Ok(CliConfig { command: Command::Check { seed: a.seed }, plan: None }),
        CommandArgs::Run(a) => {
            let file = load_config(&a.config)?;
            let name = a
                .problem
                .or(file.problem.clone())
                .ok_or_else(|| CliError::Usage("run needs --problem".into()))?;
            let algorithm = parse_algorithm(a.algo.as_deref().or(file.algo.as_deref()).unwrap_or("gass"))?;
            let overrides = a.params.overrides().or(file.params());
            validate_overrides(&overrides)?;
            let problems = vec![ProblemEntry::new(name, a.dim.or(file.dim))];
            check_problems(&problems)?;
            let mut plan = ExperimentPlan::desk(problems, vec![algorithm], a.seed.or(file.seed).unwrap_or(0));
            plan.runs = 1;
            plan.budget = a.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET);
            plan.overrides = overrides;
            plan.workers = Some(1);
            Ok(CliConfig { command: Command::Run { out: a.out.or(file.out) }, plan: Some(plan) })
        }
        CommandArgs::Suite(a) => {
            let file = load_config(&a.config)?;
            let full_scale = a.full_scale || file.full_scale.unwrap_or(false);
            let dim = a.dim.or(file.dim);
            let names: Vec<String> = match a.problems.or(file.problems.clone()) {
                Some(n) => n,
                None if full_scale => gass::PROBLEM_NAMES.iter().map(|s| s.to_string()).collect(),
                None => return Err(CliError::Usage("suite needs --problems (or --full-scale)".into())),
            };
            let problems: Vec<ProblemEntry> = names
                .iter()
                .map(|n| {
                    let native = gass::get_problem(n).map(|p| p.dimension).ok();
                    // A shared --dim only applies where the formula allows it.
                    let d = if full_scale { None } else { dim.filter(|d| Some(*d) != native) };
                    ProblemEntry::new(n.trim(), d)
                })
                .collect();
            check_problems(&problems)?;
            let algos = a
                .algos
                .or(file.algos.clone())
                .unwrap_or_else(|| vec!["gass".into()])
                .iter()
                .map(|s| parse_algorithm(s.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let overrides = a.params.overrides().or(file.params());
            validate_overrides(&overrides)?;
            let mut plan = ExperimentPlan::desk(problems, algos, a.seed.or(file.seed).unwrap_or(0));
            plan.runs = a.runs.or(file.runs).unwrap_or(if full_scale { FULL_RUNS } else { DESK_RUNS });
            if plan.runs == 0 {
                return Err(CliError::Usage("--runs must be at least 1".into()));
            }
            plan.budget = a.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET);
            plan.overrides = overrides;
            plan.workers = a.workers.or(file.workers);
            let out = a.out.or(file.out).unwrap_or_else(default_output_dir);
            Ok(CliConfig { command: Command::Suite { out }, plan: Some(plan) })
        }
    }
}

fn fmt_solution(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Runs the resolved command, writing human-readable output to `out` and
/// errors to `err`. Returns the process exit code.
pub fn execute(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match try_execute(config, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUN_FAILURE
        }
    }
}

fn try_execute(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Box<dyn std::error::Error>> {
    match &config.command {
        Command::List => {
            writeln!(out, "{:<14} {:>4} {:>10}", "name", "n", "H*")?;
            for p in all_problems() {
                writeln!(out, "{:<14} {:>4} {:>10}", p.name, p.dimension, p.h_star)?;
            }
            Ok(EXIT_OK)
        }
        Command::Check { seed } => {
            let outcomes = run_self_check(*seed)?;
            let mut ok = true;
            for c in &outcomes {
                ok &= c.passed;
                writeln!(
                    out,
                    "{} {} value={:e} tol={:e} seed={}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance,
                    seed
                )?;
            }
            Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILURE })
        }
        Command::Run { out: dir } => {
            let plan = config.plan.as_ref().ok_or("run without a plan")?;
            let results = run_experiment(plan)?;
            for f in &results.failures {
                writeln!(err, "run failed: {} {} run {}: {}", f.problem, f.algorithm, f.run_id, f.error)?;
            }
            let Some(r) = results.reports.first() else {
                return Ok(EXIT_RUN_FAILURE);
            };
            writeln!(out, "problem      {} (n = {})", r.problem, r.dimension)?;
            writeln!(out, "algorithm    {}", r.algorithm)?;
            writeln!(out, "seed         {}", r.seed)?;
            writeln!(out, "evaluations  {}", r.evals_used)?;
            writeln!(out, "H*           {}", r.h_star)?;
            writeln!(out, "best value   {}", r.best_value)?;
            writeln!(out, "best x       {}", fmt_solution(&r.best_solution))?;
            if let Some(dir) = dir {
                let rows = aggregate(&results.reports, &default_eps(&results.reports))?;
                export_results(&rows, &results.reports, dir)?;
            }
            Ok(EXIT_OK)
        }
        Command::Suite { out: dir } => {
            let plan = config.plan.as_ref().ok_or("suite without a plan")?;
            let results = run_experiment(plan)?;
            let rows = aggregate(&results.reports, &default_eps(&results.reports))?;
            let (res, curves) = export_results(&rows, &results.reports, dir)?;
            writeln!(
                out,
                "{:<14} {:<12} {:>4} {:>5} {:>12} {:>16} {:>12} {:>8} {:>6}",
                "problem", "algorithm", "n", "runs", "H*", "mean best", "std_err", "eps", "M_eps"
            )?;
            for r in &rows {
                writeln!(
                    out,
                    "{:<14} {:<12} {:>4} {:>5} {:>12} {:>16.9} {:>12.3e} {:>8.0e} {:>6}",
                    r.problem, r.algorithm.name(), r.dimension, r.runs, r.h_star, r.h_bar_star, r.std_err, r.eps, r.m_eps
                )?;
            }
            writeln!(out, "wrote {} and {}", res.display(), curves.display())?;
            for f in &results.failures {
                writeln!(err, "run failed: {} {} run {}: {}", f.problem, f.algorithm, f.run_id, f.error)?;
            }
            Ok(if results.failures.is_empty() { EXIT_OK } else { EXIT_RUN_FAILURE })
        }
    }
}
