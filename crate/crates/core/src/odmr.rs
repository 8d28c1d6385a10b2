//! ODMR sweep analysis: direct contrast and single-Lorentzian dip fit.

use crate::error::{ensure_finite, Error, Result};
use crate::fitcore::{fit_nonlinear, FitOptions, FitResult, Model};

/// Points averaged at each end of the sweep for the reference level.
pub const EDGE_POINTS: usize = 5;
/// A dip shallower than this fraction of the edge level is flagged.
pub const LOW_SIGNAL_RATIO: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct OdmrSweep {
    /// Hz, strictly increasing.
    pub frequencies: Vec<f64>,
    pub fluorescence: Vec<f64>,
}

impl OdmrSweep {
    pub const MIN_POINTS: usize = 2 * EDGE_POINTS + 1;

    /// Builds a sweep from points in any frequency order; they are sorted.
    pub fn new(frequencies: Vec<f64>, fluorescence: Vec<f64>) -> Result<Self> {
        if frequencies.len() != fluorescence.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies, {} fluorescence values",
                frequencies.len(),
                fluorescence.len()
            )));
        }
        if frequencies.len() < Self::MIN_POINTS {
            return Err(Error::InsufficientData { needed: Self::MIN_POINTS, got: frequencies.len() });
        }
        ensure_finite("frequencies", &frequencies)?;
        ensure_finite("fluorescence", &fluorescence)?;
        let mut pts: Vec<(f64, f64)> = frequencies.into_iter().zip(fluorescence).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[1].0 == w[0].0) {
            return Err(Error::InvalidInput("duplicate frequency in ODMR sweep".into()));
        }
        let (frequencies, fluorescence) = pts.into_iter().unzip();
        Ok(Self { frequencies, fluorescence })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Mean of the first and last [`EDGE_POINTS`] fluorescence values.
    pub fn edge_mean(&self) -> f64 {
        let n = self.fluorescence.len();
        let head = &self.fluorescence[..EDGE_POINTS];
        let tail = &self.fluorescence[n - EDGE_POINTS..];
        (head.iter().sum::<f64>() + tail.iter().sum::<f64>()) / (2 * EDGE_POINTS) as f64
    }

    fn argmin(&self) -> usize {
        self.fluorescence.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
    }
}

/// `(I_avg − I_min) / I_avg` with `I_avg` the mean of the five first and five
/// last points.
pub fn contrast_direct(sweep: &OdmrSweep) -> Result<f64> {
    if sweep.len() < OdmrSweep::MIN_POINTS || sweep.frequencies.len() != sweep.fluorescence.len() {
        return Err(Error::InsufficientData { needed: OdmrSweep::MIN_POINTS, got: sweep.len() });
    }
    let avg = sweep.edge_mean();
    if avg <= 0.0 {
        return Err(Error::InvalidInput(format!("edge mean {avg} is not positive")));
    }
    let min = sweep.fluorescence.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((avg - min) / avg)
}

/// Full width of the dip at half its depth below the edge mean, by linear
/// interpolation. `None` if the dip does not recover past half depth on
/// both sides.
pub fn dip_fwhm(sweep: &OdmrSweep) -> Option<f64> {
    let f = &sweep.frequencies;
    let y = &sweep.fluorescence;
    let i_min = sweep.argmin();
    let half = 0.5 * (sweep.edge_mean() + y[i_min]);
    let left = (0..i_min).rev().find(|&j| y[j] >= half).map(|j| {
        let t = (half - y[j]) / (y[j + 1] - y[j]);
        f[j] + t * (f[j + 1] - f[j])
    })?;
    let right = (i_min + 1..y.len()).find(|&j| y[j] >= half).map(|j| {
        let t = (half - y[j - 1]) / (y[j] - y[j - 1]);
        f[j - 1] + t * (f[j] - f[j - 1])
    })?;
    Some(right - left)
}

/// `B·(1 − C·(Γ/2)² / ((f − f0)² + (Γ/2)²))`, parameters `[B, C, f0, Γ]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LorentzianDip;

impl Model for LorentzianDip {
    fn arity(&self) -> usize {
        4
    }

    fn eval(&self, p: &[f64], f: f64) -> f64 {
        let h = 0.5 * p[3];
        let d = f - p[2];
        p[0] * (1.0 - p[1] * h * h / (d * d + h * h))
    }

    fn gradient(&self, p: &[f64], f: f64, grad: &mut [f64]) -> bool {
        let (b, c, f0, gamma) = (p[0], p[1], p[2], p[3]);
        let h = 0.5 * gamma;
        let d = f - f0;
        let den = d * d + h * h;
        let l = h * h / den;
        grad[0] = 1.0 - c * l;
        grad[1] = -b * l;
        grad[2] = -b * c * 2.0 * h * h * d / (den * den);
        grad[3] = -b * c * h * d * d / (den * den);
        true
    }
}

pub fn lorentzian_dip(baseline: f64, contrast: f64, center: f64, fwhm: f64, f: f64) -> f64 {
    LorentzianDip.eval(&[baseline, contrast, center, fwhm], f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdmrResult {
    pub contrast_direct: f64,
    pub contrast_lorentzian: f64,
    pub contrast_lorentzian_error: f64,
    /// Hz.
    pub center_frequency: f64,
    pub center_frequency_error: f64,
    /// Hz.
    pub linewidth_fwhm: f64,
    pub linewidth_fwhm_error: f64,
    pub baseline: f64,
    pub baseline_error: f64,
    /// Dip minimum above [`LOW_SIGNAL_RATIO`] of the edge level.
    pub low_signal: bool,
    /// Fitted center at or outside the outermost sweep points.
    pub center_at_boundary: bool,
    pub converged: bool,
    /// Fit in centred, span-normalised frequency units.
    pub fit: FitResult,
}

impl OdmrResult {
    pub fn predict(&self, f: f64) -> f64 {
        lorentzian_dip(self.baseline, self.contrast_lorentzian, self.center_frequency, self.linewidth_fwhm, f)
    }
}

pub fn fit_odmr(sweep: &OdmrSweep) -> Result<OdmrResult> {
    fit_odmr_with(sweep, &FitOptions::default())
}

pub fn fit_odmr_with(sweep: &OdmrSweep, options: &FitOptions) -> Result<OdmrResult> {
    let sweep = OdmrSweep::new(sweep.frequencies.clone(), sweep.fluorescence.clone())?;
    let direct = contrast_direct(&sweep)?;
    let n = sweep.len();
    let f_lo = sweep.frequencies[0];
    let f_hi = sweep.frequencies[n - 1];
    let mid = 0.5 * (f_lo + f_hi);
    let span = f_hi - f_lo;
    let x: Vec<f64> = sweep.frequencies.iter().map(|f| (f - mid) / span).collect();
    let y = &sweep.fluorescence;

    let edge = sweep.edge_mean();
    let i_min = sweep.argmin();
    let low_signal = y[i_min] >= LOW_SIGNAL_RATIO * edge;
    let spacing = span / (n - 1) as f64;
    let gamma0 = dip_fwhm(&sweep).filter(|w| *w > 0.0).unwrap_or(4.0 * spacing);
    let initial = [edge, direct.max(1e-3), x[i_min], gamma0 / span];

    let fit = fit_nonlinear(&LorentzianDip, &x, y, None, &initial, options)?;
    let p = &fit.parameters;
    let se = &fit.standard_errors;
    let center_frequency = mid + span * p[2];
    let center_at_boundary = center_frequency <= sweep.frequencies[1] || center_frequency >= sweep.frequencies[n - 2];

    Ok(OdmrResult {
        contrast_direct: direct,
        contrast_lorentzian: p[1],
        contrast_lorentzian_error: se[1],
        center_frequency,
        center_frequency_error: span * se[2],
        linewidth_fwhm: span * p[3].abs(),
        linewidth_fwhm_error: span * se[3],
        baseline: p[0],
        baseline_error: se[0],
        low_signal,
        center_at_boundary,
        converged: fit.converged,
        fit,
    })
}
