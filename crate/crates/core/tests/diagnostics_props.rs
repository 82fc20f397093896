use gass::diagnostics::{
    check_gradient_big_l, check_gradient_l, check_hessian_second_term, check_quantile_consistency, reference_setting,
    run_self_check, DEFAULT_FD_STEP,
};
use gass::NaturalParam;

/// `E[exp(−X²)]` for `X ~ N(μ, σ²)` written in natural parameters.
fn closed_form_l(t: &[f64]) -> f64 {
    let var = -0.5 / t[1];
    let mu = t[0] * var;
    let d = 1.0 + 2.0 * var;
    d.powf(-0.5) * (-mu * mu / d).exp()
}

fn closed_form_grad(t: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..2)
        .map(|j| {
            let mut up = t.to_vec();
            let mut dn = t.to_vec();
            up[j] += h;
            dn[j] -= h;
            (closed_form_l(&up) - closed_form_l(&dn)) / (2.0 * h)
        })
        .collect()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn self_check_passes_for_seeds_zero_to_four() {
    for seed in 0..5 {
        for outcome in run_self_check(seed).unwrap() {
            assert!(outcome.passed, "seed {seed}: {} = {} ({})", outcome.name, outcome.value, outcome.detail);
        }
    }
}

#[test]
fn gradient_estimate_matches_closed_form() {
    let (theta, shape, objective) = reference_setting();
    let exact = closed_form_grad(&theta.to_vec());
    let report = check_gradient_big_l(&theta, &shape, &objective, 1_000_000, DEFAULT_FD_STEP, 3).unwrap();
    assert!(max_rel(&report.analytic, &exact) < 0.01, "{:?} vs {exact:?}", report.analytic);
    assert!((report.l_hat - closed_form_l(&theta.to_vec())).abs() < 0.005);

    // ∇ ln L = ∇L / L.
    let log_report = check_gradient_l(&theta, &shape, &objective, 1_000_000, DEFAULT_FD_STEP, 3).unwrap();
    let scaled: Vec<f64> = report.analytic.iter().map(|g| g / report.l_hat).collect();
    assert!(max_rel(&log_report.analytic, &scaled) < 1e-9);
}

#[test]
fn gradient_checks_tighten_with_samples() {
    let (theta, shape, objective) = reference_setting();
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 0..10 {
        small += check_gradient_l(&theta, &shape, &objective, 10_000, DEFAULT_FD_STEP, seed).unwrap().relative_error;
        large += check_gradient_l(&theta, &shape, &objective, 1_000_000, DEFAULT_FD_STEP, seed).unwrap().relative_error;
    }
    assert!(large <= small, "{large} > {small}");
}

#[test]
fn variance_check_on_shifted_gaussian() {
    let theta = NaturalParam::from_moments(&[1.5, -0.5], &[0.5, 2.0]).unwrap();
    let report = check_hessian_second_term(&theta, 1_000_000, 0).unwrap();
    assert!(report.passed, "{}", report.max_relative_error);
}

#[test]
fn quantile_errors_decrease() {
    let report = check_quantile_consistency(0.1, &[1_000, 10_000, 100_000], 20, 0).unwrap();
    assert!(report.decreasing, "{:?}", report.mean_abs_error);
    assert!((report.target - 1.2815515655446004).abs() < 1e-12);
    assert!(check_quantile_consistency(0.1, &[100, 10], 1, 0).is_err());
}
