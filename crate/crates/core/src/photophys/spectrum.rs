use crate::error::{ensure_finite, Error, Result};
use crate::fitcore::fit_linear;

/// NV⁻ zero-phonon line search window, nm.
pub const ZPL_WINDOW: (f64, f64) = (630.0, 645.0);
/// NV⁰ emission band used for the charge-state diagnostic, nm.
pub const NV0_BAND: (f64, f64) = (550.0, 600.0);
/// Total band the NV⁰ fraction is normalized to, nm.
pub const TOTAL_BAND: (f64, f64) = (550.0, 850.0);
/// Range a spectrum should cover for the diagnostics to be complete, nm.
pub const DIAGNOSTIC_RANGE: (f64, f64) = (570.0, 750.0);
pub const DEFAULT_NV0_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `(wavelength nm, intensity)`.
    pub samples: Vec<(f64, f64)>,
}

impl Spectrum {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InsufficientData { needed: 3, got: samples.len() });
        }
        let wl: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let it: Vec<f64> = samples.iter().map(|s| s.1).collect();
        ensure_finite("wavelengths", &wl)?;
        ensure_finite("intensities", &it)?;
        if wl.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("wavelengths must be strictly increasing".into()));
        }
        if it.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("spectral intensities must be non-negative".into()));
        }
        Ok(Self { samples })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    fn interpolate(&self, wl: f64) -> f64 {
        let i = self.samples.partition_point(|s| s.0 < wl);
        if i == 0 {
            return self.samples[0].1;
        }
        if i == self.samples.len() {
            return self.samples[i - 1].1;
        }
        let (x0, y0) = self.samples[i - 1];
        let (x1, y1) = self.samples[i];
        y0 + (wl - x0) / (x1 - x0) * (y1 - y0)
    }

    /// Trapezoidal integral over `[lo, hi]` clipped to the sampled range.
    pub fn band_integral(&self, lo: f64, hi: f64) -> f64 {
        let (first, last) = self.range();
        let lo = lo.max(first);
        let hi = hi.min(last);
        if hi <= lo {
            return 0.0;
        }
        let mut pts = vec![(lo, self.interpolate(lo))];
        pts.extend(self.samples.iter().copied().filter(|s| s.0 > lo && s.0 < hi));
        pts.push((hi, self.interpolate(hi)));
        pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    pub nv0_threshold: f64,
    /// Required ZPL excess over the local baseline, in units of baseline RMS.
    pub zpl_min_snr: f64,
    /// Width of the baseline flanks on either side of the ZPL window, nm.
    pub baseline_flank: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { nv0_threshold: DEFAULT_NV0_THRESHOLD, zpl_min_snr: 3.0, baseline_flank: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumReport {
    pub zpl_wavelength: Option<f64>,
    pub zpl_present: bool,
    pub peak_wavelength: f64,
    pub nv0_band_fraction: f64,
    pub charge_state_ok: bool,
    /// The spectrum does not cover the ZPL window.
    pub zpl_window_uncovered: bool,
    /// The spectrum does not cover the full diagnostic range.
    pub incomplete_coverage: bool,
}

pub fn analyze_spectrum(spectrum: &Spectrum, nv0_threshold: f64) -> Result<SpectrumReport> {
    analyze_spectrum_with(spectrum, &SpectrumOptions { nv0_threshold, ..Default::default() })
}

pub fn analyze_spectrum_with(spectrum: &Spectrum, options: &SpectrumOptions) -> Result<SpectrumReport> {
    let spectrum = Spectrum::new(spectrum.samples.clone())?;
    let (first, last) = spectrum.range();
    let samples = &spectrum.samples;

    let peak_wavelength = samples.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|s| s.0).unwrap_or(first);

    let zpl_window_uncovered = first > ZPL_WINDOW.0 || last < ZPL_WINDOW.1;
    let zpl_wavelength = if zpl_window_uncovered { None } else { find_zpl(samples, options) };

    let total = spectrum.band_integral(TOTAL_BAND.0, TOTAL_BAND.1);
    let nv0 = spectrum.band_integral(NV0_BAND.0, NV0_BAND.1);
    let nv0_band_fraction = if total > 0.0 { (nv0 / total).clamp(0.0, 1.0) } else { 0.0 };

    Ok(SpectrumReport {
        zpl_wavelength,
        zpl_present: zpl_wavelength.is_some(),
        peak_wavelength,
        nv0_band_fraction,
        charge_state_ok: nv0_band_fraction < options.nv0_threshold,
        zpl_window_uncovered,
        incomplete_coverage: first > DIAGNOSTIC_RANGE.0 || last < DIAGNOSTIC_RANGE.1,
    })
}

/// Local maximum inside the ZPL window that stands out of a linear baseline
/// fitted to the flanks by at least `zpl_min_snr` times the flank RMS.
fn find_zpl(samples: &[(f64, f64)], options: &SpectrumOptions) -> Option<f64> {
    let (lo, hi) = ZPL_WINDOW;
    let (i, &(wl, peak)) = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0 >= lo && s.0 <= hi)
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    if i == 0 || i + 1 == samples.len() || !(peak > samples[i - 1].1 && peak > samples[i + 1].1) {
        return None;
    }

    let flank = options.baseline_flank;
    let (fx, fy): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| (s.0 >= lo - flank && s.0 < lo) || (s.0 > hi && s.0 <= hi + flank))
        .copied()
        .unzip();
    let baseline = fit_linear(&fx, &fy).ok()?;
    let rms = (fx.iter().zip(&fy).map(|(x, y)| (y - baseline.predict(*x)).powi(2)).sum::<f64>() / fx.len() as f64)
        .sqrt();
    let excess = peak - baseline.predict(wl);
    let scale = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    if !(excess > 1e-9 * scale && excess >= options.zpl_min_snr * rms) {
        return None;
    }

    // Parabolic refinement through the peak sample and its neighbours.
    let (x0, y0) = samples[i - 1];
    let (x2, y2) = samples[i + 1];
    let denom = (x0 - wl) * (x0 - x2) * (wl - x2);
    let a = (x2 * (peak - y0) + wl * (y0 - y2) + x0 * (y2 - peak)) / denom;
    let b = (x2 * x2 * (y0 - peak) + wl * wl * (y2 - y0) + x0 * x0 * (peak - y2)) / denom;
    let vertex = if a < 0.0 { -b / (2.0 * a) } else { wl };
    Some(if vertex >= x0 && vertex <= x2 { vertex } else { wl })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..=700).map(|i| 500.0 + 0.5 * i as f64).collect()
    }

    #[test]
    fn flat_spectrum_has_no_zpl() {
        let s = Spectrum::new(grid().into_iter().map(|w| (w, 1.0)).collect()).unwrap();
        let r = analyze_spectrum(&s, DEFAULT_NV0_THRESHOLD).unwrap();
        assert!(!r.zpl_present);
        assert!(r.zpl_wavelength.is_none());
    }

    #[test]
    fn narrow_line_is_found() {
        let s = Spectrum::new(
            grid().into_iter().map(|w| (w, 1.0 + 0.001 * (w - 500.0) + (-(w - 637.3f64).powi(2) / 2.0).exp())).collect(),
        )
        .unwrap();
        let r = analyze_spectrum(&s, DEFAULT_NV0_THRESHOLD).unwrap();
        assert!(r.zpl_present);
        assert!((r.zpl_wavelength.unwrap() - 637.3).abs() < 0.1);
    }

    #[test]
    fn uncovered_window() {
        let s = Spectrum::new((0..100).map(|i| (650.0 + i as f64, 1.0)).collect()).unwrap();
        let r = analyze_spectrum(&s, DEFAULT_NV0_THRESHOLD).unwrap();
        assert!(r.zpl_window_uncovered);
        assert!(r.incomplete_coverage);
        assert!(!r.zpl_present);
    }

    #[test]
    fn band_integral_clips_and_interpolates() {
        let s = Spectrum::new(vec![(0.0, 0.0), (10.0, 10.0), (20.0, 20.0)]).unwrap();
        assert!((s.band_integral(-5.0, 25.0) - 200.0).abs() < 1e-12);
        assert!((s.band_integral(5.0, 15.0) - 100.0).abs() < 1e-12);
        assert_eq!(s.band_integral(30.0, 40.0), 0.0);
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![(1.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(Spectrum::new(vec![(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)]).is_err());
    }
}
