//! The ten benchmark problems, written as maximization problems, with their
//! search boxes, known optima and per-problem algorithm defaults.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::Objective;
use crate::error::{GassError, Result};

/// Stable registry names, in benchmark order.
pub const PROBLEM_NAMES: [&str; 10] = [
    "dejong5",
    "shekel",
    "powel",
    "rosenbrock",
    "griewank",
    "trigonometric",
    "rastrigin",
    "pinter",
    "levy",
    "sphere",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    Dejong5,
    Shekel,
    Powel,
    Rosenbrock,
    Griewank,
    Trigonometric,
    Rastrigin,
    Pinter,
    Levy,
    Sphere,
}

/// Algorithm settings tied to a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemDefaults {
    pub rho: f64,
    pub alpha0: f64,
    pub feedback_c: f64,
    /// Tolerance for counting a run as ε-optimal.
    pub eps_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub kind: ProblemKind,
    pub name: &'static str,
    pub dimension: usize,
    /// Per-coordinate search box `[lo, hi]`.
    pub bounds: Vec<(f64, f64)>,
    pub h_star: f64,
    pub x_star: Vec<f64>,
    /// `false` when `x_star`/`h_star` are rounded rather than exact.
    pub optimum_exact: bool,
    pub defaults: ProblemDefaults,
}

/// Columns `(a_{j1}, a_{j2})`, `j = 1..25`, of Dejong's fifth function.
pub fn dejong_a() -> [[f64; 25]; 2] {
    const GRID: [f64; 5] = [-32.0, -16.0, 0.0, 16.0, 32.0];
    let mut a = [[0.0; 25]; 2];
    for j in 0..25 {
        a[0][j] = GRID[j % 5];
        a[1][j] = GRID[j / 5];
    }
    a
}

pub const SHEKEL_A: [[f64; 4]; 5] = [
    [4.0, 4.0, 4.0, 4.0],
    [1.0, 1.0, 1.0, 1.0],
    [8.0, 8.0, 8.0, 8.0],
    [6.0, 6.0, 6.0, 6.0],
    [3.0, 7.0, 3.0, 7.0],
];
pub const SHEKEL_C: [f64; 5] = [0.1, 0.2, 0.2, 0.4, 0.4];

fn dejong5(x: &[f64]) -> f64 {
    let a = dejong_a();
    let s: f64 = (0..25)
        .map(|j| 1.0 / ((j + 1) as f64 + (x[0] - a[0][j]).powi(6) + (x[1] - a[1][j]).powi(6)))
        .sum();
    -1.0 / (0.002 + s)
}

fn shekel(x: &[f64]) -> f64 {
    SHEKEL_A
        .iter()
        .zip(SHEKEL_C)
        .map(|(a, c)| {
            let d2: f64 = x.iter().zip(a).map(|(xi, ai)| (xi - ai) * (xi - ai)).sum();
            1.0 / (d2 + c)
        })
        .sum()
}

fn powel(x: &[f64]) -> f64 {
    let n = x.len();
    // 1-based i = 2..=n-2 touches x_{i-1}..x_{i+2}.
    let s: f64 = (2..=n - 2)
        .map(|i| {
            let (a, b, c, d) = (x[i - 2], x[i - 1], x[i], x[i + 1]);
            (a + 10.0 * b).powi(2) + 5.0 * (c - d).powi(2) + (b - 2.0 * c).powi(4) + 10.0 * (a - d).powi(4)
        })
        .sum();
    -s - 1.0
}

fn rosenbrock(x: &[f64]) -> f64 {
    let s: f64 = x
        .windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
        .sum();
    -s - 1.0
}

fn griewank(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    let prod: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    -sq / 4000.0 + prod - 1.0
}

fn trigonometric(x: &[f64]) -> f64 {
    let s: f64 = x
        .iter()
        .map(|v| {
            let d2 = (v - 0.9) * (v - 0.9);
            8.0 * (7.0 * d2).sin().powi(2) + 6.0 * (14.0 * d2).sin().powi(2) + d2
        })
        .sum();
    -s - 1.0
}

fn rastrigin(x: &[f64]) -> f64 {
    let s: f64 = x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum();
    -s - 10.0 * x.len() as f64 - 1.0
}

/// Boundary neighbours wrap around: `x_0 := x_n`, `x_{n+1} := x_1`.
fn pinter(x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for k in 0..n {
        let i = (k + 1) as f64;
        let prev = x[(k + n - 1) % n];
        let cur = x[k];
        let next = x[(k + 1) % n];
        let a = prev * cur.sin() - cur + next.sin();
        let b = prev * prev - 2.0 * cur + 3.0 * next - cur.cos() + 1.0;
        s += i * cur * cur + 20.0 * i * a.sin().powi(2) + i * (1.0 + i * b * b).log10();
    }
    -s - 1.0
}

fn levy(x: &[f64]) -> f64 {
    let y: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let n = y.len();
    let mid: f64 = y[..n - 1]
        .iter()
        .map(|yi| (yi - 1.0).powi(2) * (1.0 + 10.0 * (PI * yi + 1.0).sin().powi(2)))
        .sum();
    let last = (y[n - 1] - 1.0).powi(2) * (1.0 + 10.0 * (2.0 * PI * y[n - 1]).sin().powi(2));
    -(PI * y[0]).sin().powi(2) - mid - last - 1.0
}

fn sphere(x: &[f64]) -> f64 {
    let s: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum();
    -s - 1.0
}

impl ProblemKind {
    pub fn from_name(name: &str) -> Result<Self> {
        let kind = match name.to_ascii_lowercase().as_str() {
            "dejong5" => ProblemKind::Dejong5,
            "shekel" => ProblemKind::Shekel,
            "powel" => ProblemKind::Powel,
            "rosenbrock" => ProblemKind::Rosenbrock,
            "griewank" => ProblemKind::Griewank,
            "trigonometric" => ProblemKind::Trigonometric,
            "rastrigin" => ProblemKind::Rastrigin,
            "pinter" => ProblemKind::Pinter,
            "levy" => ProblemKind::Levy,
            "sphere" => ProblemKind::Sphere,
            _ => {
                return Err(GassError::UnknownProblem {
                    name: name.to_string(),
                    valid: PROBLEM_NAMES.join(", "),
                })
            }
        };
        Ok(kind)
    }

    pub fn name(self) -> &'static str {
        PROBLEM_NAMES[self as usize]
    }

    fn function(self) -> fn(&[f64]) -> f64 {
        match self {
            ProblemKind::Dejong5 => dejong5,
            ProblemKind::Shekel => shekel,
            ProblemKind::Powel => powel,
            ProblemKind::Rosenbrock => rosenbrock,
            ProblemKind::Griewank => griewank,
            ProblemKind::Trigonometric => trigonometric,
            ProblemKind::Rastrigin => rastrigin,
            ProblemKind::Pinter => pinter,
            ProblemKind::Levy => levy,
            ProblemKind::Sphere => sphere,
        }
    }

    fn native_dimension(self) -> usize {
        match self {
            ProblemKind::Dejong5 => 2,
            ProblemKind::Shekel => 4,
            ProblemKind::Rosenbrock => 10,
            ProblemKind::Rastrigin => 20,
            _ => 50,
        }
    }

    /// Smallest dimension the formula is defined for; `None` when the
    /// dimension is fixed.
    fn min_dimension(self) -> Option<usize> {
        match self {
            ProblemKind::Dejong5 | ProblemKind::Shekel => None,
            ProblemKind::Powel => Some(4),
            ProblemKind::Rosenbrock | ProblemKind::Pinter => Some(2),
            _ => Some(1),
        }
    }

    fn bounds(self) -> (f64, f64) {
        match self {
            ProblemKind::Shekel => (0.0, 10.0),
            ProblemKind::Rosenbrock => (-10.0, 10.0),
            ProblemKind::Rastrigin => (-5.12, 5.12),
            _ => (-50.0, 50.0),
        }
    }

    fn optimizer_coordinate(self) -> f64 {
        match self {
            ProblemKind::Dejong5 => -32.0,
            ProblemKind::Shekel => 4.0,
            ProblemKind::Rosenbrock | ProblemKind::Levy => 1.0,
            ProblemKind::Trigonometric => 0.9,
            _ => 0.0,
        }
    }

    fn h_star(self) -> f64 {
        match self {
            ProblemKind::Dejong5 => -0.998,
            ProblemKind::Shekel => 10.153,
            ProblemKind::Griewank => 0.0,
            _ => -1.0,
        }
    }

    fn defaults(self) -> ProblemDefaults {
        use ProblemKind::*;
        ProblemDefaults {
            rho: if matches!(self, Dejong5 | Shekel) { 0.02 } else { 0.05 },
            alpha0: if matches!(self, Dejong5 | Shekel | Rosenbrock) { 0.3 } else { 1.0 },
            feedback_c: if matches!(self, Powel | Rosenbrock | Pinter) { 0.002 } else { 0.1 },
            eps_tolerance: if matches!(self, Rosenbrock | Rastrigin | Pinter) { 1e-2 } else { 1e-3 },
        }
    }

    fn build(self, dimension: usize) -> Problem {
        let (lo, hi) = self.bounds();
        Problem {
            kind: self,
            name: self.name(),
            dimension,
            bounds: vec![(lo, hi); dimension],
            h_star: self.h_star(),
            x_star: vec![self.optimizer_coordinate(); dimension],
            optimum_exact: !matches!(self, ProblemKind::Dejong5 | ProblemKind::Shekel),
            defaults: self.defaults(),
        }
    }
}

/// Looks a problem up by its registry name, at its native dimension.
pub fn get_problem(name: &str) -> Result<Problem> {
    let kind = ProblemKind::from_name(name)?;
    Ok(kind.build(kind.native_dimension()))
}

pub fn all_problems() -> Vec<Problem> {
    PROBLEM_NAMES.iter().map(|n| get_problem(n).expect("registry name")).collect()
}

/// Same formula at dimension `n`. Optimizer and optimum follow from the
/// per-coordinate pattern of the closed form.
pub fn reduced_dimension(problem: &Problem, n: usize) -> Result<Problem> {
    match problem.kind.min_dimension() {
        None => Err(GassError::UnsupportedReduction(problem.name.to_string())),
        Some(min) if n < min => Err(GassError::InvalidParameter(format!(
            "problem '{}' needs dimension >= {min}, got {n}",
            problem.name
        ))),
        Some(_) => Ok(problem.kind.build(n)),
    }
}

/// Problem by name with an optional dimension override.
pub fn problem_with_dimension(name: &str, dimension: Option<usize>) -> Result<Problem> {
    let p = get_problem(name)?;
    match dimension {
        Some(n) if n != p.dimension => reduced_dimension(&p, n),
        _ => Ok(p),
    }
}

impl Problem {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.kind.function())(x)
    }

    /// Half-width of the largest coordinate interval, measured from the origin.
    pub fn radius(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| lo.abs().max(hi.abs())).fold(0.0, f64::max)
    }
}

impl Objective for Problem {
    fn evaluate(&self, x: &[f64]) -> f64 {
        Problem::evaluate(self, x)
    }
}

pub fn evaluate_batch(problem: &Problem, solutions: &[Vec<f64>]) -> Result<Vec<f64>> {
    solutions
        .iter()
        .map(|x| {
            if x.len() != problem.dimension {
                Err(GassError::DimensionMismatch { expected: problem.dimension, actual: x.len() })
            } else {
                Ok(problem.evaluate(x))
            }
        })
        .collect()
}
