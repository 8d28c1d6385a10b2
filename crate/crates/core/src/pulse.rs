//! Laser pulse metrology on sampled intensity traces, and the steady-state
//! acousto-optic (Bragg) reflectance of a single acoustic layer.

use std::f64::consts::PI;

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// A uniformly sampled intensity trace; time in nanoseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrace {
    pub sample_period: f64,
    pub samples: Vec<f64>,
    pub nominal_pulse_width: Option<f64>,
}

impl PulseTrace {
    pub const MIN_SAMPLES: usize = 50;

    pub fn new(sample_period: f64, samples: Vec<f64>) -> Result<Self> {
        ensure_positive("sample period", sample_period)?;
        if samples.len() < Self::MIN_SAMPLES {
            return Err(Error::InsufficientData { needed: Self::MIN_SAMPLES, got: samples.len() });
        }
        ensure_finite("trace samples", &samples)?;
        Ok(Self { sample_period, samples, nominal_pulse_width: None })
    }

    pub fn with_nominal_width(mut self, width: f64) -> Self {
        self.nominal_pulse_width = Some(width);
        self
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.sample_period
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseMetrics {
    /// 10%–90% rise time, ns.
    pub rise_time: f64,
    /// 90%–10% fall time, ns.
    pub fall_time: f64,
    pub on_level: f64,
    pub off_level: f64,
    /// `on_level / off_level`; infinite when the off level is not positive.
    pub extinction_ratio: f64,
    pub extinction_ratio_undefined: bool,
    /// RMS deviation over the first quarter of the plateau, relative to `on_level`.
    pub ripple_rms_fraction: f64,
    /// `on_level / input reference`, when a reference was supplied.
    pub transmittance: Option<f64>,
    /// Interpolated 50% crossing times of the rising and falling edges, ns.
    pub rising_edge_time: f64,
    pub falling_edge_time: f64,
}

impl PulseMetrics {
    /// Time between the two 50% crossings, ns.
    pub fn width(&self) -> f64 {
        self.falling_edge_time - self.rising_edge_time
    }
}

/// Plateau samples the metrics require between the edges.
pub const MIN_PLATEAU_SAMPLES: usize = 20;
/// Samples next to an edge excluded from the baseline average.
pub const BASELINE_GUARD: usize = 10;

/// Indices `(rising, falling)` of the first sample past each 50% crossing,
/// found with 25%/75% hysteresis so noise on an edge does not count as
/// extra pulses.
fn locate_edges(s: &[f64]) -> Result<(usize, usize)> {
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    if hi <= lo {
        return Err(Error::NoPulse("trace is constant".into()));
    }
    let level = |f: f64| lo + f * (hi - lo);
    let (low_thr, mid, high_thr) = (level(0.25), level(0.5), level(0.75));

    let mut high = s[0] >= mid;
    if high {
        return Err(Error::NoPulse("trace starts above the 50% level".into()));
    }
    let mut rising = Vec::new();
    let mut falling = Vec::new();
    let mut candidate: Option<usize> = None;
    for i in 1..s.len() {
        if !high {
            if candidate.is_none() && s[i - 1] < mid && s[i] >= mid {
                candidate = Some(i);
            }
            if s[i] < low_thr {
                candidate = None;
            }
            if s[i] >= high_thr {
                rising.push(candidate.unwrap_or(i));
                candidate = None;
                high = true;
            }
        } else {
            if candidate.is_none() && s[i - 1] >= mid && s[i] < mid {
                candidate = Some(i);
            }
            if s[i] >= high_thr {
                candidate = None;
            }
            if s[i] < low_thr {
                falling.push(candidate.unwrap_or(i));
                candidate = None;
                high = false;
            }
        }
    }
    match (rising.len(), falling.len()) {
        (0, _) => Err(Error::NoPulse("no rising 50% crossing".into())),
        (_, 0) => Err(Error::NoPulse("no falling 50% crossing".into())),
        (1, 1) => Ok((rising[0], falling[0])),
        (r, _) => Err(Error::MultiplePulses(r)),
    }
}

/// Fractional sample index where `s` crosses `level` between `j` and `j + 1`.
fn interpolate(s: &[f64], j: usize, level: f64) -> f64 {
    let (a, b) = (s[j], s[j + 1]);
    if a == b {
        j as f64
    } else {
        j as f64 + (level - a) / (b - a)
    }
}

/// Rising-edge crossing of `level`, searching outward from the 50% anchor.
fn rising_crossing(s: &[f64], anchor: usize, level: f64) -> Option<f64> {
    if s[anchor] < level {
        let j = (anchor..s.len() - 1).find(|&j| s[j + 1] >= level)?;
        Some(interpolate(s, j, level))
    } else {
        let j = (0..anchor).rev().find(|&j| s[j] < level)?;
        Some(interpolate(s, j, level))
    }
}

/// Falling-edge crossing of `level`, searching outward from the 50% anchor.
fn falling_crossing(s: &[f64], anchor: usize, level: f64) -> Option<f64> {
    if s[anchor] > level {
        let j = (anchor..s.len() - 1).find(|&j| s[j + 1] <= level)?;
        Some(interpolate(s, j, level))
    } else {
        let j = (0..anchor).rev().find(|&j| s[j] > level)?;
        Some(interpolate(s, j, level))
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

struct Edges {
    rise_10: f64,
    rise_90: f64,
    fall_90: f64,
    fall_10: f64,
}

fn measure_edges(s: &[f64], rise_anchor: usize, fall_anchor: usize, on: f64, off: f64) -> Result<Edges> {
    let l10 = off + 0.1 * (on - off);
    let l90 = off + 0.9 * (on - off);
    let missing = || Error::NoPulse("edge does not reach the 10%/90% levels".into());
    Ok(Edges {
        rise_10: rising_crossing(s, rise_anchor, l10).ok_or_else(missing)?,
        rise_90: rising_crossing(s, rise_anchor, l90).ok_or_else(missing)?,
        fall_90: falling_crossing(s, fall_anchor, l90).ok_or_else(missing)?,
        fall_10: falling_crossing(s, fall_anchor, l10).ok_or_else(missing)?,
    })
}

pub fn analyze_pulse(trace: &PulseTrace) -> Result<PulseMetrics> {
    analyze_pulse_with_reference(trace, None)
}

/// Pulse metrics; `input_reference` is the power before the modulator, in
/// the trace's intensity units, used for the transmittance.
///
/// The rising edge is taken to extend one rise time before its 10% crossing;
/// the baseline is the mean of everything before that, minus a further
/// [`BASELINE_GUARD`] samples. The plateau likewise starts one rise time after
/// the 90% crossing and ends one fall time before the falling 90% crossing.
pub fn analyze_pulse_with_reference(trace: &PulseTrace, input_reference: Option<f64>) -> Result<PulseMetrics> {
    let trace = PulseTrace::new(trace.sample_period, trace.samples.clone())?;
    let s = &trace.samples;
    let (rise_anchor, fall_anchor) = locate_edges(s)?;
    if fall_anchor <= rise_anchor + MIN_PLATEAU_SAMPLES {
        return Err(Error::NoPulse("plateau shorter than the minimum".into()));
    }

    // Initial plateau between the 50% anchors and baseline before the rise.
    let mut plateau = (rise_anchor, fall_anchor);
    let mut baseline_end = rise_anchor.saturating_sub(BASELINE_GUARD);
    let mut edges = None;
    let mut on = 0.0;
    let mut off = 0.0;
    for _ in 0..4 {
        if baseline_end == 0 {
            return Err(Error::NoPulse("no baseline before the rising edge".into()));
        }
        let len = plateau.1 - plateau.0;
        on = mean(&s[plateau.0 + len / 4..plateau.1 - len / 4]);
        off = mean(&s[..baseline_end]);
        let e = measure_edges(s, rise_anchor, fall_anchor, on, off)?;

        let rise_len = e.rise_90 - e.rise_10;
        let fall_len = e.fall_10 - e.fall_90;
        let start = (e.rise_90 + rise_len).ceil().max(0.0) as usize;
        let end = (e.fall_90 - fall_len).floor().max(0.0) as usize;
        if end <= start || end - start < MIN_PLATEAU_SAMPLES {
            return Err(Error::NoPulse("plateau shorter than the minimum".into()));
        }
        let edge_start = (e.rise_10 - rise_len).floor();
        baseline_end = if edge_start > BASELINE_GUARD as f64 { edge_start as usize - BASELINE_GUARD } else { 0 };
        plateau = (start, end.min(s.len()));
        edges = Some(e);
    }
    let e = edges.expect("loop runs at least once");

    let len = plateau.1 - plateau.0;
    let head = &s[plateau.0..plateau.0 + (len / 4).max(1)];
    let ripple_rms = (head.iter().map(|v| (v - on).powi(2)).sum::<f64>() / head.len() as f64).sqrt();
    let dt = trace.sample_period;
    let mid = off + 0.5 * (on - off);
    let rising_edge_time = rising_crossing(s, rise_anchor, mid).unwrap_or(rise_anchor as f64) * dt;
    let falling_edge_time = falling_crossing(s, fall_anchor, mid).unwrap_or(fall_anchor as f64) * dt;

    let extinction_ratio_undefined = off <= 0.0;
    Ok(PulseMetrics {
        rise_time: (e.rise_90 - e.rise_10) * dt,
        fall_time: (e.fall_10 - e.fall_90) * dt,
        on_level: on,
        off_level: off,
        extinction_ratio: if extinction_ratio_undefined { f64::INFINITY } else { on / off },
        extinction_ratio_undefined,
        ripple_rms_fraction: ripple_rms / on.abs(),
        transmittance: input_reference.map(|r| on / r),
        rising_edge_time,
        falling_edge_time,
    })
}

/// Normalized sinc, `sin(πu)/(πu)` with `sinc(0) = 1`.
pub fn sinc(u: f64) -> f64 {
    let x = PI * u;
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Bragg angle `arcsin(λ / 2Λ)` for acoustic wavelength `Λ` and optical wavelength `λ`.
pub fn bragg_angle(acoustic_wavelength: f64, optical_wavelength: f64) -> Result<f64> {
    ensure_positive("acoustic wavelength", acoustic_wavelength)?;
    ensure_positive("optical wavelength", optical_wavelength)?;
    let s = optical_wavelength / (2.0 * acoustic_wavelength);
    if s > 1.0 {
        return Err(Error::InvalidInput(format!(
            "optical wavelength {optical_wavelength} exceeds twice the acoustic wavelength {acoustic_wavelength}"
        )));
    }
    Ok(s.asin())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AomConfig {
    pub acoustic_wavelength: f64,
    /// Angular acoustic frequency, rad/s. Only sets the frequency shift of
    /// the diffracted beam; it does not enter the reflectance magnitude.
    pub acoustic_frequency: f64,
    pub optical_wavelength: f64,
    pub interaction_length: f64,
    pub max_reflectance: f64,
}

impl AomConfig {
    pub fn new(
        acoustic_wavelength: f64,
        acoustic_frequency: f64,
        optical_wavelength: f64,
        interaction_length: f64,
        max_reflectance: f64,
    ) -> Result<Self> {
        ensure_positive("acoustic wavelength", acoustic_wavelength)?;
        ensure_positive("acoustic frequency", acoustic_frequency)?;
        ensure_positive("optical wavelength", optical_wavelength)?;
        ensure_positive("interaction length", interaction_length)?;
        if !(max_reflectance > 0.0 && max_reflectance <= 1.0) {
            return Err(Error::InvalidInput(format!("max reflectance must lie in (0, 1], got {max_reflectance}")));
        }
        Ok(Self { acoustic_wavelength, acoustic_frequency, optical_wavelength, interaction_length, max_reflectance })
    }

    pub fn optical_wavenumber(&self) -> f64 {
        2.0 * PI / self.optical_wavelength
    }

    pub fn acoustic_wavenumber(&self) -> f64 {
        2.0 * PI / self.acoustic_wavelength
    }

    pub fn bragg_angle(&self) -> Result<f64> {
        bragg_angle(self.acoustic_wavelength, self.optical_wavelength)
    }

    /// Argument of the sinc for the given branch at incidence angle `theta`.
    pub fn detuning(&self, theta: f64, branch: Branch) -> f64 {
        let q = match branch {
            Branch::Up => self.acoustic_wavenumber(),
            Branch::Down => -self.acoustic_wavenumber(),
        };
        (2.0 * self.optical_wavenumber() * theta.sin() - q) * self.interaction_length / (2.0 * PI)
    }
}

/// Diffraction order: `Up` absorbs a phonon (frequency up-shifted, `r₊`),
/// `Down` emits one (`r₋`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Up,
    Down,
}

/// `|r±| = r0·|sinc((2k·sinθ ∓ q)·L/(2π))|`.
pub fn reflectance_magnitude(cfg: &AomConfig, theta: f64, branch: Branch) -> f64 {
    cfg.max_reflectance * sinc(cfg.detuning(theta, branch)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_trace(period: f64) -> PulseTrace {
        let s: Vec<f64> = (0..400).map(|i| if (100..300).contains(&i) { 10.0 } else { 0.01 }).collect();
        PulseTrace::new(period, s).unwrap()
    }

    #[test]
    fn step_edges_hit_the_interpolation_floor() {
        let m = analyze_pulse(&step_trace(0.8)).unwrap();
        assert!(m.rise_time <= 0.8 + 1e-12);
        assert!(m.fall_time <= 0.8 + 1e-12);
        assert!((m.extinction_ratio - 1000.0).abs() < 1e-9);
        assert_eq!(m.ripple_rms_fraction, 0.0);
    }

    #[test]
    fn linear_ramp_rise_time() {
        // 10–90% span of 28.8 ns means a 36 ns full ramp: 45 samples at 0.8 ns.
        let dt = 0.8;
        let ramp = 45.0;
        let s: Vec<f64> = (0..3000)
            .map(|i| {
                let i = i as f64;
                let up = ((i - 500.0) / ramp).clamp(0.0, 1.0);
                let down = ((2500.0 - i) / ramp).clamp(0.0, 1.0);
                1e-3 + (1.0 - 1e-3) * up.min(down)
            })
            .collect();
        let m = analyze_pulse(&PulseTrace::new(dt, s).unwrap()).unwrap();
        assert!((m.rise_time - 28.8).abs() < 1e-9, "{}", m.rise_time);
        assert!((m.fall_time - 28.8).abs() < 1e-9, "{}", m.fall_time);
    }

    #[test]
    fn transmittance_needs_a_reference() {
        let trace = step_trace(1.0);
        assert_eq!(analyze_pulse(&trace).unwrap().transmittance, None);
        let t = analyze_pulse_with_reference(&trace, Some(20.0)).unwrap().transmittance.unwrap();
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_positive_off_level() {
        let s: Vec<f64> = (0..400).map(|i| if (100..300).contains(&i) { 1.0 } else { 0.0 }).collect();
        let m = analyze_pulse(&PulseTrace::new(1.0, s).unwrap()).unwrap();
        assert!(m.extinction_ratio_undefined);
        assert!(m.extinction_ratio.is_infinite());
    }

    #[test]
    fn pulse_errors() {
        let flat = PulseTrace::new(1.0, vec![1.0; 100]).unwrap();
        assert!(matches!(analyze_pulse(&flat), Err(Error::NoPulse(_))));
        let two: Vec<f64> =
            (0..600).map(|i| if (100..200).contains(&i) || (350..450).contains(&i) { 1.0 } else { 0.0 }).collect();
        assert!(matches!(analyze_pulse(&PulseTrace::new(1.0, two).unwrap()), Err(Error::MultiplePulses(2))));
        let only_rise: Vec<f64> = (0..200).map(|i| if i >= 100 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(analyze_pulse(&PulseTrace::new(1.0, only_rise).unwrap()), Err(Error::NoPulse(_))));
        assert!(PulseTrace::new(1.0, vec![0.0; 49]).is_err());
        assert!(PulseTrace::new(0.0, vec![0.0; 60]).is_err());
    }

    #[test]
    fn bragg_angles() {
        assert!((bragg_angle(1.0, 2.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((bragg_angle(1.0, 1.0).unwrap() - PI / 6.0).abs() < 1e-15);
        // arcsin(0.532 / 13)
        assert!((bragg_angle(6.5e-6, 532e-9).unwrap() - 0.0409345).abs() < 1e-6);
        assert!(bragg_angle(1.0, 2.5).is_err());
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(1.0).abs() < 1e-15);
        assert!((sinc(0.5) - 2.0 / PI).abs() < 1e-15);
    }
}
