//! Gradient-based adaptive stochastic search (GASS) for maximizing black-box
//! functions over `ℝⁿ`.
//!
//! The search keeps an independent Gaussian sampling distribution in natural
//! parameters and moves it with a quasi-Newton step built from quantile-shaped
//! sample weights. The crate also carries an averaged variant, a modified
//! cross-entropy baseline, ten benchmark problems, a replicated-experiment
//! harness and numerical self-checks.

pub mod benchmarks;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod shaping;

pub use benchmarks::{get_problem, reduced_dimension, Problem, PROBLEM_NAMES};
pub use engine::{
    run, Algorithm, EngineConfig, EngineState, Objective, ProjectionBox, RunReport, SampleBatch,
    Schedules, VarianceMode,
};
pub use error::{GassError, Result};
pub use model::{MeanMoments, NaturalParam};
pub use shaping::{LowerBoundPolicy, ShapeSpec, WeightedValues};
