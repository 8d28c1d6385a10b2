//! Damped nonlinear least squares, closed-form linear regression and
//! first-order uncertainty propagation.
//!
//! Every analysis module describes its physical model through [`Model`] and
//! hands it to [`fit_nonlinear`]. The solver is a Levenberg-Marquardt
//! iteration on Jacobi-scaled normal equations: the damping factor is divided
//! by 10 after an accepted step and multiplied by 10 after a rejected one.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};

/// A scalar model `y = f(params, x)`.
pub trait Model {
    /// Number of parameters.
    fn arity(&self) -> usize;

    fn eval(&self, params: &[f64], x: f64) -> f64;

    /// Writes the analytic partial derivatives into `grad` and returns `true`.
    /// Models without a closed form keep the default, which makes the solver
    /// fall back to central finite differences.
    fn gradient(&self, _params: &[f64], _x: f64, _grad: &mut [f64]) -> bool {
        false
    }
}

/// Adapter turning a closure into a [`Model`] without analytic derivatives.
pub struct FnModel<F> {
    arity: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64], f64) -> f64,
{
    pub fn new(arity: usize, f: F) -> Self {
        Self { arity, f }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64], f64) -> f64,
{
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, params: &[f64], x: f64) -> f64 {
        (self.f)(params, x)
    }
}

/// Straight line `p[0] * x + p[1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LineModel;

impl Model for LineModel {
    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, p: &[f64], x: f64) -> f64 {
        p[0] * x + p[1]
    }

    fn gradient(&self, _p: &[f64], x: f64, grad: &mut [f64]) -> bool {
        grad[0] = x;
        grad[1] = 1.0;
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative (scaled) parameter change below which a step counts as converged.
    pub tol: f64,
    /// Bound on the cosine between the residual vector and any Jacobian column.
    pub gtol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8, gtol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub parameters: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Row-major `arity × arity` covariance matrix.
    pub covariance: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub residual_sum_squares: f64,
    pub degrees_of_freedom: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.parameters.len();
        DMatrix::from_fn(n, n, |i, j| self.covariance[i][j])
    }

    /// First-order variance of a scalar function of the parameters whose
    /// gradient is `grad`.
    pub fn propagate(&self, grad: &[f64]) -> f64 {
        let mut var = 0.0;
        for (i, gi) in grad.iter().enumerate() {
            for (j, gj) in grad.iter().enumerate() {
                var += gi * self.covariance[i][j] * gj;
            }
        }
        var.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// NaN when only two points are given (no residual degrees of freedom).
    pub slope_error: f64,
    pub intercept_error: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least-squares line through `(x, y)`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("x has {} values, y has {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: x.len() });
    }
    ensure_finite("x", x)?;
    ensure_finite("y", y)?;
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::Degenerate("all abscissa values are equal".into()));
    }

    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let (sxx, sxy) = x.iter().zip(y).fold((0.0, 0.0), |(sxx, sxy), (&xi, &yi)| {
        let dx = xi - x_mean;
        (sxx + dx * dx, sxy + dx * (yi - y_mean))
    });
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;

    let (slope_error, intercept_error) = if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - slope * xi - intercept).powi(2)).sum();
        let s2 = rss / (n - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / n + x_mean * x_mean / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(LinearFit { slope, intercept, slope_error, intercept_error })
}

/// Finite-difference step for a parameter of the given value.
pub fn fd_step(param: f64) -> f64 {
    (1e-6 * param.abs()).max(1e-8)
}

/// Central-difference Jacobian, `x.len() × arity`.
pub fn finite_difference_jacobian<M: Model + ?Sized>(model: &M, params: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    ensure_finite("parameters", params)?;
    let m = model.arity();
    let mut jac = DMatrix::zeros(x.len(), m);
    let mut p = params.to_vec();
    for j in 0..m {
        let h = fd_step(params[j]);
        for (i, &xi) in x.iter().enumerate() {
            p[j] = params[j] + h;
            let hi = model.eval(&p, xi);
            p[j] = params[j] - h;
            let lo = model.eval(&p, xi);
            p[j] = params[j];
            let d = (hi - lo) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("model derivative at x={xi}")));
            }
            jac[(i, j)] = d;
        }
    }
    Ok(jac)
}

/// Jacobian of the model, analytic when the model provides it.
pub fn model_jacobian<M: Model + ?Sized>(model: &M, params: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    let m = model.arity();
    let mut grad = vec![0.0; m];
    if x.is_empty() || !model.gradient(params, x[0], &mut grad) {
        return finite_difference_jacobian(model, params, x);
    }
    let mut jac = DMatrix::zeros(x.len(), m);
    for (i, &xi) in x.iter().enumerate() {
        model.gradient(params, xi, &mut grad);
        for j in 0..m {
            if !grad[j].is_finite() {
                return Err(Error::NonFinite(format!("model derivative at x={xi}")));
            }
            jac[(i, j)] = grad[j];
        }
    }
    Ok(jac)
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;

struct Problem<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    sqrt_w: Vec<f64>,
}

impl<M: Model + ?Sized> Problem<'_, M> {
    /// Weighted residuals, or `None` if the model produced a non-finite value.
    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        let mut r = DVector::zeros(self.x.len());
        for i in 0..self.x.len() {
            let v = self.sqrt_w[i] * (self.y[i] - self.model.eval(p, self.x[i]));
            if !v.is_finite() {
                return None;
            }
            r[i] = v;
        }
        Some(r)
    }

    fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let mut jac = model_jacobian(self.model, p, self.x)?;
        for (i, mut row) in jac.row_iter_mut().enumerate() {
            row *= self.sqrt_w[i];
        }
        Ok(jac)
    }
}

/// Column norms of `J`, used as Marquardt scaling. Zero columns get unit scale.
fn column_scale(jtj: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        jtj.nrows(),
        (0..jtj.nrows()).map(|j| {
            let d = jtj[(j, j)].sqrt();
            if d > 0.0 && d.is_finite() {
                d
            } else {
                1.0
            }
        }),
    )
}

fn scaled_inverse(jtj: &DMatrix<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    let m = jtj.nrows();
    let scaled = DMatrix::from_fn(m, m, |i, j| jtj[(i, j)] / (scale[i] * scale[j]));
    let inv = match scaled.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => scaled.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::from_element(m, m, f64::NAN)),
    };
    DMatrix::from_fn(m, m, |i, j| {
        let v = inv[(i, j)] / (scale[i] * scale[j]);
        let vt = inv[(j, i)] / (scale[i] * scale[j]);
        0.5 * (v + vt)
    })
}

/// Weighted nonlinear least squares.
///
/// `weights`, when given, are inverse variances and the covariance is
/// reported unscaled. Without weights unit weights are assumed and the
/// covariance is scaled by the reduced chi-square.
///
/// Numerical failure during the iteration (singular normal equations that
/// damping cannot repair, exhausted iterations) yields `converged == false`
/// rather than an error.
pub fn fit_nonlinear<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    initial: &[f64],
    options: &FitOptions,
) -> Result<FitResult> {
    let m = model.arity();
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("x has {} values, y has {}", x.len(), y.len())));
    }
    if initial.len() != m {
        return Err(Error::DimensionMismatch(format!("model has {m} parameters, initial guess has {}", initial.len())));
    }
    if x.len() < m + 1 {
        return Err(Error::InsufficientData { needed: m + 1, got: x.len() });
    }
    ensure_finite("x", x)?;
    ensure_finite("y", y)?;
    ensure_finite("initial parameters", initial)?;
    let sqrt_w = match weights {
        Some(w) => {
            if w.len() != x.len() {
                return Err(Error::DimensionMismatch(format!("{} weights for {} points", w.len(), x.len())));
            }
            if w.iter().any(|&wi| !(wi.is_finite() && wi > 0.0)) {
                return Err(Error::InvalidInput("weights must be positive and finite".into()));
            }
            w.iter().map(|wi| wi.sqrt()).collect()
        }
        None => vec![1.0; x.len()],
    };
    let problem = Problem { model, x, y, sqrt_w };

    let mut p = initial.to_vec();
    let mut r = problem
        .residuals(&p)
        .ok_or_else(|| Error::NonFinite("model evaluated at the initial parameters".into()))?;
    let mut rss = r.norm_squared();
    // Residual norm at which the data are reproduced to rounding error.
    let y_norm: f64 = y.iter().zip(&problem.sqrt_w).map(|(yi, wi)| (yi * wi).powi(2)).sum::<f64>().sqrt();
    let exact_floor = 1e-12 * y_norm;

    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut last_step_small = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        let jac = match problem.jacobian(&p) {
            Ok(j) => j,
            Err(_) => break,
        };
        let jtj = jac.tr_mul(&jac);
        let g = jac.tr_mul(&r);
        let scale = column_scale(&jtj);
        let scaled_g = g.component_div(&scale);
        let r_norm = rss.sqrt();
        let grad_cos = if r_norm <= exact_floor { 0.0 } else { scaled_g.amax() / r_norm };

        if r_norm <= exact_floor || (last_step_small && grad_cos <= options.gtol) {
            converged = true;
            break;
        }
        iterations += 1;

        let m = p.len();
        let scaled_jtj = DMatrix::from_fn(m, m, |i, j| jtj[(i, j)] / (scale[i] * scale[j]));
        let p_scaled_norm = DVector::from_iterator(m, p.iter().zip(scale.iter()).map(|(pi, si)| pi * si)).norm();

        let mut accepted = false;
        let mut stalled_small = false;
        loop {
            let mut a = scaled_jtj.clone();
            for i in 0..m {
                a[(i, i)] += lambda;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    break;
                }
                continue;
            };
            let u = chol.solve(&scaled_g);
            let small = u.norm() <= options.tol * (p_scaled_norm + options.tol);
            let p_new: Vec<f64> = p.iter().zip(u.iter().zip(scale.iter())).map(|(pi, (ui, si))| pi + ui / si).collect();
            if let Some(r_new) = problem.residuals(&p_new) {
                let rss_new = r_new.norm_squared();
                if rss_new < rss || (rss_new == rss && small) {
                    p = p_new;
                    r = r_new;
                    rss = rss_new;
                    lambda = (lambda / 10.0).max(LAMBDA_MIN);
                    last_step_small = small;
                    accepted = true;
                    break;
                }
            }
            if small {
                stalled_small = true;
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
        }

        if stalled_small {
            // Steps within tolerance no longer lower the residual: at a minimum.
            converged = grad_cos <= options.gtol;
            break;
        }
        if !accepted {
            break;
        }
    }

    let dof = x.len() - p.len();
    let covariance = match problem.jacobian(&p) {
        Ok(jac) => {
            let jtj = jac.tr_mul(&jac);
            let scale = column_scale(&jtj);
            let mut cov = scaled_inverse(&jtj, &scale);
            if weights.is_none() {
                cov *= rss / dof as f64;
            }
            cov
        }
        Err(_) => DMatrix::from_element(p.len(), p.len(), f64::NAN),
    };
    let standard_errors = (0..p.len()).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
    let residuals = r.iter().zip(&problem.sqrt_w).map(|(ri, wi)| ri / wi).collect();

    Ok(FitResult {
        parameters: p,
        standard_errors,
        covariance: (0..covariance.nrows()).map(|i| covariance.row(i).iter().copied().collect()).collect(),
        residuals,
        residual_sum_squares: rss,
        degrees_of_freedom: dof,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_through_exact_data() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = fit_nonlinear(&LineModel, &x, &y, None, &[0.0, 0.0], &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.parameters[0] - 2.0).abs() < 1e-12);
        assert!((fit.parameters[1] - 1.0).abs() < 1e-12);
        assert!(fit.residual_sum_squares < 1e-20);
        assert_eq!(fit.degrees_of_freedom, 8);
    }

    #[test]
    fn linear_two_points() {
        let fit = fit_linear(&[0.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!(fit.slope, 2.0);
        assert_eq!(fit.intercept, 1.0);
        assert!(fit.slope_error.is_nan());
    }

    #[test]
    fn linear_flat() {
        let fit = fit_linear(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.intercept, 0.0);
        assert_eq!(fit.slope_error, 0.0);
    }

    #[test]
    fn linear_rejects_degenerate_abscissa() {
        assert!(matches!(fit_linear(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(matches!(fit_linear(&[1.0], &[0.0]), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn nonlinear_input_errors() {
        let opts = FitOptions::default();
        assert!(matches!(
            fit_nonlinear(&LineModel, &[0.0, 1.0, 2.0], &[0.0, 1.0], None, &[0.0, 0.0], &opts),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            fit_nonlinear(&LineModel, &[0.0, 1.0], &[0.0, 1.0], None, &[0.0, 0.0], &opts),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
        assert!(matches!(
            fit_nonlinear(&LineModel, &[0.0, f64::NAN, 2.0], &[0.0, 1.0, 2.0], None, &[0.0, 0.0], &opts),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            fit_nonlinear(&LineModel, &[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], Some(&[1.0, 0.0, 1.0]), &[0.0, 0.0], &opts),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn line_jacobian_columns() {
        let jac = finite_difference_jacobian(&LineModel, &[3.0, -1.0], &[-2.0, 0.5, 7.0]).unwrap();
        for (i, x) in [-2.0, 0.5, 7.0].iter().enumerate() {
            assert!((jac[(i, 0)] - x).abs() < 1e-8);
            assert!((jac[(i, 1)] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn non_convergence_is_flagged_not_raised() {
        // A model whose second parameter never influences the output.
        let model = FnModel::new(2, |p: &[f64], x: f64| p[0] * x);
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.1, 1.2, 1.9, 3.1];
        let fit = fit_nonlinear(&model, &x, &y, None, &[0.5, 1.0], &FitOptions { max_iter: 3, ..Default::default() })
            .unwrap();
        assert_eq!(fit.parameters.len(), 2);
    }
}
