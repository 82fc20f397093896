//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use gass::benchmarks::all_problems;
use gass::diagnostics::{check_gradient_big_l, check_gradient_l, check_quantile_consistency, reference_setting};
use gass::engine::{ascent_direction, estimate_var_t, moment_direction, step};
use gass::harness::{aggregate, default_eps, export_results, run_experiment, ExperimentPlan, ProblemEntry, TrialReport};
use gass::model::sufficient_stats;
use gass::shaping::normalize_weights;
use gass::{get_problem, Algorithm, EngineConfig, EngineState, NaturalParam, ProjectionBox, SampleBatch};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = fn() -> (bool, String);

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        ("1 identity suite", identities),
        ("2 gradient checks", gradients),
        ("3 quantile consistency", quantile),
        ("4 benchmark fidelity", fidelity),
        ("5 desk-scale reproduction", desk_scale),
        ("6 algorithm relations", relations),
        ("7 determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (id, f) in criteria {
        let start = Instant::now();
        let (passed, detail) = f();
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
        if !passed {
            failed.push(id);
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn identities() -> (bool, String) {
    let mut r = rng(100);
    let mut problems = Vec::new();

    // Projection idempotence and clamping.
    let bx = ProjectionBox::for_radius(3, 50.0).unwrap();
    for _ in 0..1000 {
        let raw: Vec<f64> = (0..6).map(|_| r.random_range(-1e9..1e9) * if r.random_bool(0.5) { 1.0 } else { 1e-9 }).collect();
        let once = bx.project_raw(&raw).unwrap();
        if bx.project(&once) != once || !bx.contains(&once.to_vec()) {
            problems.push("projection");
            break;
        }
    }
    let inside = NaturalParam::from_moments(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    if bx.project(&inside) != inside {
        problems.push("projection of interior point");
    }

    // Weight normalization.
    let w = normalize_weights(&[1.0, 3.0]).unwrap();
    let equal = normalize_weights(&[2.5; 8]).unwrap();
    if w != vec![0.25, 0.75] || equal.iter().any(|v| *v != 0.125) {
        problems.push("weights");
    }

    // Moment round trips.
    for _ in 0..1000 {
        let mean: Vec<f64> = (0..4).map(|_| r.random_range(-1e3..1e3)).collect();
        let var: Vec<f64> = (0..4).map(|_| 10f64.powf(r.random_range(-6.0..6.0))).collect();
        let theta = NaturalParam::from_moments(&mean, &var).unwrap();
        let back = NaturalParam::from_moments(&theta.mean(), &theta.variance()).unwrap();
        let ok = theta.to_vec().iter().zip(back.to_vec()).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs());
        if !ok {
            problems.push("moment round trip");
            break;
        }
    }
    let t0 = NaturalParam::from_moments(&[0.0, 0.0], &[1000.0, 1000.0]).unwrap();
    if t0.quadratic() != [-5e-4, -5e-4] {
        problems.push("initial covariance");
    }

    // Running average against a direct mean.
    let objective = |x: &[f64]| -(x[0] - 1.0).abs() - x[1].abs();
    let mut cfg = EngineConfig::new(Algorithm::GassAvg, 2, 10.0, usize::MAX).unwrap();
    cfg.schedules.n0 = 10;
    cfg.epsilon = 1e-3;
    let mut state = EngineState::new(NaturalParam::from_moments(&[3.0, -3.0], &[2.0, 2.0]).unwrap());
    let mut sum = [0.0; 4];
    let mut bar_err = 0.0f64;
    let mut g = rng(101);
    for k in 1..=10_000 {
        step(&mut state, &objective, &cfg, &mut g).unwrap();
        for (s, t) in sum.iter_mut().zip(state.theta.to_vec()) {
            *s += t;
        }
        if k % 500 == 0 {
            for (s, b) in sum.iter().zip(state.theta_bar.to_vec()) {
                let direct = s / k as f64;
                bar_err = bar_err.max((b - direct).abs() / direct.abs().max(1.0));
            }
        }
    }
    if bar_err > 1e-9 {
        problems.push("running average");
    }

    // Variance estimator against a two-pass covariance.
    let mut cov_err = 0.0f64;
    for trial in 0..20 {
        let n = 1 + trial % 4;
        let count = 2 + trial * 50;
        let xs: Vec<Vec<f64>> = (0..count).map(|_| (0..n).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let ts: Vec<Vec<f64>> = xs.iter().map(|x| sufficient_stats(x)).collect();
        let d = 2 * n;
        let m = count as f64;
        let mean: Vec<f64> = (0..d).map(|j| ts.iter().map(|t| t[j]).sum::<f64>() / m).collect();
        let oracle = DMatrix::from_fn(d, d, |i, j| ts.iter().map(|t| (t[i] - mean[i]) * (t[j] - mean[j])).sum::<f64>() / (m - 1.0));
        let est = estimate_var_t(&SampleBatch::new(xs, vec![0.0; count]).unwrap()).unwrap();
        cov_err = cov_err.max((est - &oracle).amax() / oracle.amax().max(1.0));
    }
    if cov_err > 1e-12 {
        problems.push("variance estimator");
    }

    let detail = format!("average error {bar_err:.1e} (tol 1e-9), covariance error {cov_err:.1e} (tol 1e-12)");
    if problems.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; failing: {}", problems.join(", ")))
    }
}

fn gradients() -> (bool, String) {
    let (theta, shape, objective) = reference_setting();
    let mut worst = 0.0f64;
    let mut inconclusive = false;
    for seed in 0..5 {
        let a = check_gradient_l(&theta, &shape, &objective, 100_000, 1e-4, seed).unwrap();
        let b = check_gradient_big_l(&theta, &shape, &objective, 100_000, 1e-4, seed).unwrap();
        worst = worst.max(a.relative_error).max(b.relative_error);
        inconclusive |= a.inconclusive || b.inconclusive;
    }
    (!inconclusive && worst < 0.05, format!("max relative error {worst:.2e} over seeds 0-4 (tol 5e-2)"))
}

fn quantile() -> (bool, String) {
    let q = check_quantile_consistency(0.1, &[1_000, 10_000, 100_000], 20, 0).unwrap();
    let last = *q.mean_abs_error.last().unwrap();
    let errs: Vec<String> = q.mean_abs_error.iter().map(|e| format!("{e:.2e}")).collect();
    (
        q.decreasing && last < 0.02,
        format!("mean |error| at N=1e3,1e4,1e5: {} (tol 2e-2, decreasing: {})", errs.join(", "), q.decreasing),
    )
}

fn fidelity() -> (bool, String) {
    let mut failures = Vec::new();
    let mut r = rng(4);
    for p in all_problems() {
        let v = p.evaluate(&p.x_star);
        let (target, tol) = if p.name == "dejong5" { (-0.998, 1e-3) } else { (p.h_star, 1e-6) };
        if (v - target).abs() > tol {
            failures.push(format!("{} H(x*)={v:.7} vs {target} (tol {tol:.0e})", p.name));
        }
        let mut excess = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let y: Vec<f64> = p.x_star.iter().map(|c| c + r.random_range(-1e-4..1e-4)).collect();
            excess = excess.max(p.evaluate(&y) - p.h_star - 1e-9);
        }
        if excess > 0.0 {
            failures.push(format!("{} probe exceeds H*+1e-9 by {excess:.2e}", p.name));
        }
    }
    if failures.is_empty() {
        (true, "all ten optima and probes within tolerance".into())
    } else {
        (false, failures.join("; "))
    }
}

fn plan(name: &str, dim: Option<usize>, algorithms: Vec<Algorithm>, runs: usize, budget: usize) -> ExperimentPlan {
    let mut p = ExperimentPlan::desk(vec![ProblemEntry::new(name, dim)], algorithms, 0);
    p.runs = runs;
    p.budget = budget;
    p
}

fn reports(plan: &ExperimentPlan) -> Result<Vec<TrialReport>, String> {
    let res = run_experiment(plan).map_err(|e| e.to_string())?;
    if let Some(f) = res.failures.first() {
        return Err(format!("{} run {} failed: {}", f.problem, f.run_id, f.error));
    }
    Ok(res.reports)
}

fn desk_scale() -> (bool, String) {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut record = |label: String, pass: bool| {
        ok &= pass;
        parts.push(format!("{label} {}", if pass { "ok" } else { "FAIL" }));
    };

    match reports(&plan("dejong5", None, vec![Algorithm::Gass], 10, 500_000)) {
        Ok(rs) => {
            let m = rs.iter().filter(|t| t.h_star - t.best_value <= 1e-3).count();
            record(format!("H1 M={m}/10 (need 9)"), m >= 9);
        }
        Err(e) => record(format!("H1 error {e}"), false),
    }
    match reports(&plan("shekel", None, vec![Algorithm::Gass], 10, 1_000_000)) {
        Ok(rs) => {
            let mean = rs.iter().map(|t| t.best_value).sum::<f64>() / rs.len() as f64;
            record(format!("H2 mean={mean:.4} (need 9.5)"), mean >= 9.5);
        }
        Err(e) => record(format!("H2 error {e}"), false),
    }
    match reports(&plan("sphere", Some(10), vec![Algorithm::Gass, Algorithm::GassAvg], 5, 500_000)) {
        Ok(rs) => {
            let worst = rs.iter().map(|t| (t.best_value + 1.0).abs()).fold(0.0, f64::max);
            let within = rs.iter().filter(|t| (t.best_value + 1.0).abs() <= 1e-3).count();
            record(format!("H10 n=10 {within}/{} within 1e-3 (worst gap {worst:.1e})", rs.len()), within == rs.len());
        }
        Err(e) => record(format!("H10 error {e}"), false),
    }
    match reports(&plan("griewank", Some(10), vec![Algorithm::Gass], 5, 1_000_000)) {
        Ok(rs) => {
            let m = rs.iter().filter(|t| t.h_star - t.best_value <= 1e-3).count();
            record(format!("H5 n=10 M={m}/5 (need 4)"), m >= 4);
        }
        Err(e) => record(format!("H5 error {e}"), false),
    }
    (ok, parts.join("; "))
}

/// Angle between two vectors, stable for nearly parallel inputs.
fn angle(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x / na - y / nb).powi(2);
        sum += (x / na + y / nb).powi(2);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

fn relations() -> (bool, String) {
    // Zero feedback reproduces the plain trajectory.
    let problem = gass::reduced_dimension(&get_problem("rastrigin").unwrap(), 5).unwrap();
    let mut plain = EngineConfig::new(Algorithm::Gass, 5, problem.radius(), 100_000).unwrap();
    plain.feedback_c = 0.0;
    let mut avg = plain.clone();
    avg.algorithm = Algorithm::GassAvg;
    let mut identical = true;
    for seed in 0..3 {
        let a = gass::run(&plain, &problem, &[12.0; 5], &[1000.0; 5], seed).unwrap();
        let b = gass::run(&avg, &problem, &[12.0; 5], &[1000.0; 5], seed).unwrap();
        identical &= a == b;
    }

    // The baseline's direction against the identity-preconditioned and the
    // heavily regularized preconditioned directions, on the same batches.
    let mut cfg = EngineConfig::new(Algorithm::ModifiedCe, 5, problem.radius(), usize::MAX).unwrap();
    cfg.schedules.n0 = 500;
    let mut state = EngineState::new(NaturalParam::from_moments(&[3.0; 5], &[4.0; 5]).unwrap());
    let mut g = rng(6);
    let (mut identity_dev, mut limit_dev) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let theta = state.theta.clone();
        let batch = step(&mut state, &problem, &cfg, &mut g).unwrap();
        let ce = moment_direction(&batch, &theta).unwrap();
        let e_p: Vec<f64> = ce.iter().zip(theta.expected_t().to_vec()).map(|(d, t)| d + t).collect();
        let e_theta = theta.expected_t().to_vec();
        let d = ce.len();
        let identity = ascent_direction(&DMatrix::zeros(d, d), 1.0, &e_p, &e_theta).unwrap();
        identity_dev = identity_dev.max(angle(&ce, &identity));
        let var = estimate_var_t(&batch).unwrap();
        let big = 1e8 * var.amax().max(1.0);
        let limit = ascent_direction(&var, big, &e_p, &e_theta).unwrap();
        limit_dev = limit_dev.max(angle(&ce, &limit));
    }
    // Large ε leaves a residual angle of order ‖V̂‖/ε ≈ 1e-8, so the 1e-10
    // bound applies to the identity preconditioner.
    let passed = identical && identity_dev <= 1e-10 && limit_dev <= 1e-6;
    (
        passed,
        format!(
            "c=0 trajectories identical: {identical}; angle vs identity preconditioner {identity_dev:.1e} (tol 1e-10); angle at eps=1e8*|V| {limit_dev:.1e}"
        ),
    )
}

fn determinism() -> (bool, String) {
    let mut p = ExperimentPlan::desk(
        vec![ProblemEntry::new("shekel", None), ProblemEntry::new("sphere", Some(10)), ProblemEntry::new("levy", Some(5))],
        vec![Algorithm::Gass, Algorithm::GassAvg, Algorithm::ModifiedCe],
        0,
    );
    p.runs = 3;
    p.budget = 100_000;
    let write = |dir: &std::path::Path| -> Result<(Vec<u8>, Vec<u8>), String> {
        let res = run_experiment(&p).map_err(|e| e.to_string())?;
        let rows = aggregate(&res.reports, &default_eps(&res.reports)).map_err(|e| e.to_string())?;
        let (a, b) = export_results(&rows, &res.reports, dir).map_err(|e| e.to_string())?;
        Ok((std::fs::read(a).map_err(|e| e.to_string())?, std::fs::read(b).map_err(|e| e.to_string())?))
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    match (write(d1.path()), write(d2.path())) {
        (Ok(a), Ok(b)) => (
            a == b,
            format!("results.csv {} bytes, curves.csv {} bytes, identical: {}", a.0.len(), a.1.len(), a == b),
        ),
        (Err(e), _) | (_, Err(e)) => (false, e),
    }
}
