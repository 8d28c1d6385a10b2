use crate::error::{ensure_finite, Error, Result};
use crate::fitcore::{fit_linear, fit_nonlinear, FitOptions, FitResult, LinearFit, Model};

/// Fluorescence versus excitation power, optionally with a separate
/// background series measured off the emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationCurve {
    /// `(power W, counts/s)`.
    pub points: Vec<(f64, f64)>,
    pub background_points: Option<Vec<(f64, f64)>>,
}

impl SaturationCurve {
    pub const MIN_POINTS: usize = 5;

    pub fn new(points: Vec<(f64, f64)>, background_points: Option<Vec<(f64, f64)>>) -> Result<Self> {
        validate_series("saturation", &points, Self::MIN_POINTS)?;
        if let Some(bg) = &background_points {
            validate_series("background", bg, 2)?;
        }
        Ok(Self { points, background_points })
    }

    pub fn powers(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

fn validate_series(what: &str, points: &[(f64, f64)], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::InsufficientData { needed: min, got: points.len() });
    }
    let powers: Vec<f64> = points.iter().map(|p| p.0).collect();
    let counts: Vec<f64> = points.iter().map(|p| p.1).collect();
    ensure_finite(&format!("{what} powers"), &powers)?;
    ensure_finite(&format!("{what} counts"), &counts)?;
    if powers.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidInput(format!("{what} powers must be non-negative")));
    }
    if powers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!("{what} powers must be strictly increasing")));
    }
    Ok(())
}

/// `I(P) = a·P/(P_sat + P) + b·P`, parameters `[a, P_sat, b]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaturationModel;

impl Model for SaturationModel {
    fn arity(&self) -> usize {
        3
    }

    fn eval(&self, p: &[f64], power: f64) -> f64 {
        p[0] * power / (p[1] + power) + p[2] * power
    }

    fn gradient(&self, p: &[f64], power: f64, grad: &mut [f64]) -> bool {
        let d = p[1] + power;
        grad[0] = power / d;
        grad[1] = -p[0] * power / (d * d);
        grad[2] = power;
        true
    }
}

/// Saturating term alone, parameters `[a, P_sat]`.
#[derive(Debug, Clone, Copy, Default)]
struct SaturatingTerm;

impl Model for SaturatingTerm {
    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, p: &[f64], power: f64) -> f64 {
        p[0] * power / (p[1] + power)
    }

    fn gradient(&self, p: &[f64], power: f64, grad: &mut [f64]) -> bool {
        let d = p[1] + power;
        grad[0] = power / d;
        grad[1] = -p[0] * power / (d * d);
        true
    }
}

pub fn saturation_counts(a: f64, p_sat: f64, b: f64, power: f64) -> f64 {
    SaturationModel.eval(&[a, p_sat, b], power)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationFit {
    pub a: f64,
    pub a_error: f64,
    pub p_sat: f64,
    pub p_sat_error: f64,
    /// Zero (with zero error) when a background series was subtracted.
    pub b: f64,
    pub b_error: f64,
    pub background: Option<LinearFit>,
    /// Fitted `b` came out negative.
    pub negative_background_slope: bool,
    /// `P_sat` lies outside the sampled power range.
    pub extrapolated: bool,
    /// Highest power below 1.5 × `P_sat`.
    pub undersampled: bool,
    /// Background subtraction produced negative counts.
    pub negative_corrected_counts: bool,
    pub fit: FitResult,
}

impl SaturationFit {
    pub fn predict(&self, power: f64) -> f64 {
        saturation_counts(self.a, self.p_sat, self.b, power)
    }
}

/// `counts − (slope·P + intercept)` for every point; the flag reports
/// whether any corrected value went negative.
pub fn subtract_background(signal: &[(f64, f64)], background: &LinearFit) -> (Vec<(f64, f64)>, bool) {
    let corrected: Vec<(f64, f64)> = signal.iter().map(|&(p, c)| (p, c - background.predict(p))).collect();
    let negative = corrected.iter().any(|&(_, c)| c < 0.0);
    (corrected, negative)
}

fn half_max_power(powers: &[f64], counts: &[f64]) -> f64 {
    let max = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * max;
    for i in 1..powers.len() {
        if counts[i - 1] < half && counts[i] >= half {
            let t = (half - counts[i - 1]) / (counts[i] - counts[i - 1]);
            return powers[i - 1] + t * (powers[i] - powers[i - 1]);
        }
    }
    powers[powers.len() / 2]
}

pub fn fit_saturation(curve: &SaturationCurve) -> Result<SaturationFit> {
    fit_saturation_with(curve, &FitOptions::default())
}

pub fn fit_saturation_with(curve: &SaturationCurve, options: &FitOptions) -> Result<SaturationFit> {
    let curve = SaturationCurve::new(curve.points.clone(), curve.background_points.clone())?;
    let powers = curve.powers();

    let (counts, background, negative_corrected_counts) = match &curve.background_points {
        Some(bg) => {
            let bx: Vec<f64> = bg.iter().map(|p| p.0).collect();
            let by: Vec<f64> = bg.iter().map(|p| p.1).collect();
            let line = fit_linear(&bx, &by)?;
            let (corrected, negative) = subtract_background(&curve.points, &line);
            (corrected.into_iter().map(|p| p.1).collect::<Vec<_>>(), Some(line), negative)
        }
        None => (curve.counts(), None, false),
    };

    let max_counts = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_counts <= 0.0 {
        return Err(Error::Degenerate("no positive fluorescence counts".into()));
    }
    let a0 = 2.0 * max_counts;
    let psat0 = half_max_power(&powers, &counts).max(f64::MIN_POSITIVE);

    let (a, a_error, p_sat, p_sat_error, b, b_error, fit) = if background.is_some() {
        let fit = fit_nonlinear(&SaturatingTerm, &powers, &counts, None, &[a0, psat0], options)?;
        let (a, psat) = (fit.parameters[0], fit.parameters[1]);
        (a, fit.standard_errors[0], psat, fit.standard_errors[1], 0.0, 0.0, fit)
    } else {
        let n = powers.len();
        let (p1, p2) = (powers[n - 2], powers[n - 1]);
        let tail_slope = (counts[n - 1] - counts[n - 2]) / (p2 - p1);
        let sat_slope = a0 * psat0 / (psat0 + p2).powi(2);
        let b0 = (tail_slope - sat_slope).max(0.0);
        let fit = fit_nonlinear(&SaturationModel, &powers, &counts, None, &[a0, psat0, b0], options)?;
        let p = &fit.parameters;
        let se = &fit.standard_errors;
        (p[0], se[0], p[1], se[1], p[2], se[2], fit.clone())
    };

    let p_min = powers[0];
    let p_max = powers[powers.len() - 1];
    Ok(SaturationFit {
        a,
        a_error,
        p_sat,
        p_sat_error,
        b,
        b_error,
        background,
        negative_background_slope: b < 0.0,
        extrapolated: p_sat < p_min || p_sat > p_max,
        undersampled: p_max < 1.5 * p_sat,
        negative_corrected_counts,
        fit,
    })
}
