use nvlaser::beam::CausticModel;
use nvlaser::fitcore::{
    finite_difference_jacobian, fit_linear, fit_nonlinear, model_jacobian, FitOptions, FnModel, LineModel, Model,
};
use nvlaser::photophys::SaturationModel;
use nvlaser::synth::Noise;
use proptest::prelude::*;

/// Additive N(0, sigma) samples, drawn through the synthesis noise model.
fn gaussian_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    Noise::Gaussian(sigma).apply(&vec![1.0; n], seed).unwrap().into_iter().map(|v| v - 1.0).collect()
}

fn decay() -> FnModel<impl Fn(&[f64], f64) -> f64> {
    FnModel::new(3, |p: &[f64], x: f64| p[0] * (-p[1] * x).exp() + p[2])
}

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn saturation_from_perturbed_start() {
    let (a, p_sat, b) = (1e5, 258e-6, 0.0);
    let powers = grid(20, 10e-6, 2e-3);
    let counts: Vec<f64> = powers.iter().map(|&p| SaturationModel.eval(&[a, p_sat, b], p)).collect();
    let fit = fit_nonlinear(&SaturationModel, &powers, &counts, None, &[1.5 * a, 1.5 * p_sat, 1.0], &FitOptions::default())
        .unwrap();
    assert!(fit.converged);
    assert!((fit.parameters[0] / a - 1.0).abs() < 1e-6);
    assert!((fit.parameters[1] / p_sat - 1.0).abs() < 1e-6);
    assert!(fit.parameters[2].abs() < 1e-6 * a / 2e-3);
}

#[test]
fn linear_parameter_column_is_exact() {
    let x = grid(7, 1e-5, 1e-3);
    let jac = model_jacobian(&SaturationModel, &[1e5, 258e-6, 3.0], &x).unwrap();
    for (i, &p) in x.iter().enumerate() {
        assert_eq!(jac[(i, 2)], p);
    }
}

#[test]
fn caustic_gradient_matches_finite_differences() {
    let z = grid(21, -3e-3, 3e-3);
    let p = [11.9e-6, 700e-6, 150e-6];
    let analytic = model_jacobian(&CausticModel, &p, &z).unwrap();
    let numeric = finite_difference_jacobian(&CausticModel, &p, &z).unwrap();
    for i in 0..z.len() {
        for j in 0..3 {
            let scale = analytic[(i, j)].abs().max(1e-12);
            assert!((analytic[(i, j)] - numeric[(i, j)]).abs() / scale < 1e-6, "({i},{j})");
        }
    }
}

#[test]
fn line_jacobian_is_x_and_one() {
    let x = [-2.0, 0.0, 3.5];
    let jac = finite_difference_jacobian(&LineModel, &[2.0, 1.0], &x).unwrap();
    for (i, &xi) in x.iter().enumerate() {
        assert!((jac[(i, 0)] - xi).abs() < 1e-8);
        assert!((jac[(i, 1)] - 1.0).abs() < 1e-8);
    }
}

#[test]
fn noisy_line_slope_within_three_sigma() {
    let x = grid(50, 0.0, 1.0);
    let noise = gaussian_noise(50, 0.01, 42);
    let y: Vec<f64> = x.iter().zip(&noise).map(|(x, e)| 5.0 * x + 2.0 + e).collect();
    let fit = fit_linear(&x, &y).unwrap();
    assert!((fit.slope - 5.0).abs() < 3.0 * fit.slope_error);
}

#[test]
fn non_convergence_on_iteration_budget() {
    let x = grid(40, 0.0, 10.0);
    let y: Vec<f64> = x.iter().map(|&x| 3.0 * (-0.7 * x).exp() + 0.5).collect();
    let options = FitOptions { max_iter: 2, ..FitOptions::default() };
    let fit = fit_nonlinear(&decay(), &x, &y, None, &[0.1, 5.0, -2.0], &options).unwrap();
    assert!(!fit.converged);
    assert!(fit.iterations <= 2);
}

#[test]
fn reported_errors_match_replicate_spread() {
    let truth = [3.0, 0.7, 0.5];
    let x = grid(40, 0.0, 8.0);
    let clean: Vec<f64> = x.iter().map(|&x| decay().eval(&truth, x)).collect();
    let replicates = 500;
    let mut estimates: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(replicates)).collect();
    let mut reported = [0.0; 3];
    for seed in 0..replicates as u64 {
        let y: Vec<f64> = clean.iter().zip(gaussian_noise(x.len(), 0.02, seed)).map(|(c, e)| c + e).collect();
        let fit = fit_nonlinear(&decay(), &x, &y, None, &[2.0, 1.0, 0.0], &FitOptions::default()).unwrap();
        assert!(fit.converged);
        for j in 0..3 {
            estimates[j].push(fit.parameters[j]);
            reported[j] += fit.standard_errors[j] / replicates as f64;
        }
    }
    for j in 0..3 {
        let mean = estimates[j].iter().sum::<f64>() / replicates as f64;
        let var = estimates[j].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (replicates - 1) as f64;
        let ratio = var.sqrt() / reported[j];
        assert!((0.5..2.0).contains(&ratio), "parameter {j}: spread/reported = {ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weight_scaling_leaves_optimum(scale in 1e-3f64..1e3, seed in 0u64..1000) {
        let x = grid(30, 0.0, 6.0);
        let y: Vec<f64> = x
            .iter()
            .zip(gaussian_noise(30, 0.05, seed))
            .map(|(&x, e)| 2.0 * (-0.9 * x).exp() + 0.3 + e)
            .collect();
        let w: Vec<f64> = (0..30).map(|i| 1.0 + (i % 3) as f64).collect();
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let opts = FitOptions::default();
        let a = fit_nonlinear(&decay(), &x, &y, Some(&w), &[1.0, 1.0, 0.0], &opts).unwrap();
        let b = fit_nonlinear(&decay(), &x, &y, Some(&ws), &[1.0, 1.0, 0.0], &opts).unwrap();
        for j in 0..3 {
            prop_assert!((a.parameters[j] - b.parameters[j]).abs() <= 1e-6 * a.parameters[j].abs().max(1e-3));
            let expected = a.covariance[j][j] / scale;
            prop_assert!((b.covariance[j][j] - expected).abs() <= 1e-4 * expected);
        }
    }

    #[test]
    fn refit_from_optimum_is_stationary(seed in 0u64..1000) {
        let x = grid(30, 0.0, 6.0);
        let y: Vec<f64> = x
            .iter()
            .zip(gaussian_noise(30, 0.05, seed))
            .map(|(&x, e)| 2.0 * (-0.9 * x).exp() + 0.3 + e)
            .collect();
        let opts = FitOptions::default();
        let first = fit_nonlinear(&decay(), &x, &y, None, &[1.0, 1.0, 0.0], &opts).unwrap();
        prop_assert!(first.converged);
        let second = fit_nonlinear(&decay(), &x, &y, None, &first.parameters, &opts).unwrap();
        for j in 0..3 {
            let rel = (second.parameters[j] - first.parameters[j]).abs() / first.parameters[j].abs().max(1e-3);
            prop_assert!(rel < opts.tol, "parameter {j} moved by {rel}");
        }
    }

    #[test]
    fn nonlinear_line_agrees_with_closed_form(
        slope in -100.0f64..100.0,
        intercept in -100.0f64..100.0,
        seed in 0u64..1000,
    ) {
        let x = grid(25, -3.0, 7.0);
        let y: Vec<f64> = x.iter().zip(gaussian_noise(25, 0.5, seed)).map(|(&x, e)| slope * x + intercept + e).collect();
        let lin = fit_linear(&x, &y).unwrap();
        let nl = fit_nonlinear(&LineModel, &x, &y, None, &[0.0, 0.0], &FitOptions::default()).unwrap();
        prop_assert!((nl.parameters[0] - lin.slope).abs() <= 1e-8 * lin.slope.abs().max(1.0));
        prop_assert!((nl.parameters[1] - lin.intercept).abs() <= 1e-8 * lin.intercept.abs().max(1.0));
    }
}
