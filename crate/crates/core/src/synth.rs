//! Seeded forward generators for every fitted model.
//!
//! All generators draw from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so a given seed and parameter set yields the same data
//! on every platform.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::beam::{width_at, BeamGeometry, CausticPoint, KnifeEdgeScan, KNIFE_EDGE_10_90_FACTOR};
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::odmr::{lorentzian_dip, OdmrSweep};
use crate::photonstats::TimestampSeries;
use crate::photophys::{polarization_counts, saturation_counts, PolarizationSweep, SaturationCurve, Spectrum};
use crate::pulse::PulseTrace;

pub type Seed = u64;

fn rng(seed: Seed) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(sigma: f64) -> Result<Normal<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise level {sigma} must be finite and non-negative")));
    }
    Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Measurement noise applied to a noiseless model value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    /// `value · (1 + N(0, fraction))`.
    Gaussian(f64),
    /// Counting noise: a rate (per second) observed for `exposure` seconds.
    Poisson { exposure: f64 },
}

impl Noise {
    pub fn none() -> Self {
        Noise::Gaussian(0.0)
    }

    /// Noisy copy of `values` drawn from a generator seeded with `seed`.
    pub fn apply(&self, values: &[f64], seed: Seed) -> Result<Vec<f64>> {
        self.apply_all(values, &mut rng(seed))
    }

    fn apply_all(&self, values: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match *self {
            Noise::Gaussian(fraction) => {
                let normal = gaussian(fraction)?;
                Ok(values.iter().map(|v| v * (1.0 + normal.sample(rng))).collect())
            }
            Noise::Poisson { exposure } => {
                ensure_positive("exposure", exposure)?;
                values
                    .iter()
                    .map(|&v| {
                        let mean = v * exposure;
                        if mean <= 0.0 {
                            return Ok(0.0);
                        }
                        let p = Poisson::new(mean).map_err(|e| Error::InvalidInput(e.to_string()))?;
                        Ok(p.sample(rng) / exposure)
                    })
                    .collect()
            }
        }
    }
}

/// Knife-edge scan of a beam at axial position `z`, blade edge over `x_grid`
/// (power falls with x), beam centred at `center`.
pub fn gen_knife_edge(
    geom: &BeamGeometry,
    z: f64,
    x_grid: &[f64],
    total_power: f64,
    center: f64,
    noise_fraction: f64,
    seed: Seed,
) -> Result<KnifeEdgeScan> {
    ensure_finite("blade positions", x_grid)?;
    let normal = gaussian(noise_fraction)?;
    let mut rng = rng(seed);
    let w = width_at(geom, z);
    let samples = x_grid
        .iter()
        .map(|&x| {
            let p = 0.5 * total_power * libm::erfc(SQRT_2 * (x - center) / w);
            (x, (p * (1.0 + normal.sample(&mut rng))).max(0.0))
        })
        .collect();
    KnifeEdgeScan::new(z, samples)
}

/// Beam radii at the axial positions `z`, each with multiplicative noise.
pub fn gen_caustic(geom: &BeamGeometry, z: &[f64], noise_fraction: f64, seed: Seed) -> Result<Vec<CausticPoint>> {
    ensure_finite("axial positions", z)?;
    let normal = gaussian(noise_fraction)?;
    let mut rng = rng(seed);
    Ok(z.iter().map(|&z| CausticPoint::new(z, width_at(geom, z) * (1.0 + normal.sample(&mut rng)))).collect())
}

/// Two-detector photon stream from `n_emitters` independent two-level
/// emitters. Each emitter waits an exponential time at `excitation_rate`
/// to be excited and another at `decay_rate` to emit; every emission goes
/// to channel 0 or 1 with a fair coin. Times in ns over `[0, duration]`.
pub fn gen_photon_stream(
    n_emitters: usize,
    excitation_rate: f64,
    decay_rate: f64,
    duration: f64,
    seed: Seed,
) -> Result<(TimestampSeries, TimestampSeries)> {
    if n_emitters == 0 {
        return Err(Error::InvalidInput("need at least one emitter".into()));
    }
    ensure_positive("excitation rate", excitation_rate)?;
    ensure_positive("decay rate", decay_rate)?;
    ensure_positive("duration", duration)?;
    let excite = Exp::new(excitation_rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let decay = Exp::new(decay_rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = rng(seed);

    let mut emissions = Vec::new();
    for _ in 0..n_emitters {
        let mut t = 0.0;
        loop {
            t += excite.sample(&mut rng) + decay.sample(&mut rng);
            if t > duration {
                break;
            }
            emissions.push(t);
        }
    }
    emissions.sort_by(f64::total_cmp);

    let (mut a, mut b) = (Vec::new(), Vec::new());
    for t in emissions {
        if rng.random_bool(0.5) {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    Ok((TimestampSeries::new(0, a, (0.0, duration))?, TimestampSeries::new(1, b, (0.0, duration))?))
}

/// Poisson (coherent-light) arrivals at `rate` per ns over `[0, duration]`.
pub fn gen_poisson_stream(channel_id: u32, rate: f64, duration: f64, seed: Seed) -> Result<TimestampSeries> {
    ensure_positive("rate", rate)?;
    ensure_positive("duration", duration)?;
    let gap = Exp::new(rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = rng(seed);
    let mut times = Vec::new();
    let mut t = gap.sample(&mut rng);
    while t <= duration {
        times.push(t);
        t += gap.sample(&mut rng);
    }
    TimestampSeries::new(channel_id, times, (0.0, duration))
}

/// Saturation curve `a·P/(P_sat + P) + b·P` sampled at `powers` (W).
pub fn gen_saturation(a: f64, p_sat: f64, b: f64, powers: &[f64], noise: Noise, seed: Seed) -> Result<SaturationCurve> {
    ensure_positive("saturation power", p_sat)?;
    ensure_finite("saturation parameters", &[a, b])?;
    let clean: Vec<f64> = powers.iter().map(|&p| saturation_counts(a, p_sat, b, p)).collect();
    let counts = noise.apply_all(&clean, &mut rng(seed))?;
    SaturationCurve::new(powers.iter().copied().zip(counts).collect(), None)
}

/// Polarization sweep `C0 + C1·cos(4(α′ − α′_max))`, angles in degrees.
pub fn gen_polarization(
    offset: f64,
    amplitude: f64,
    max_angle: f64,
    angles: &[f64],
    noise_fraction: f64,
    seed: Seed,
) -> Result<PolarizationSweep> {
    if !(offset > amplitude && amplitude >= 0.0) {
        return Err(Error::InvalidInput(format!("need C0 > C1 >= 0, got C0={offset}, C1={amplitude}")));
    }
    let normal = gaussian(noise_fraction)?;
    let mut rng = rng(seed);
    let points = angles
        .iter()
        .map(|&a| (a, polarization_counts(offset, amplitude, max_angle, a) * (1.0 + normal.sample(&mut rng))))
        .collect();
    PolarizationSweep::new(points)
}

/// Shape of a synthetic modulated pulse. Times in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    /// 10–90% rise time.
    pub rise_time: f64,
    /// 90–10% fall time.
    pub fall_time: f64,
    /// Between the 50% points of the two edges.
    pub width: f64,
    pub on_level: f64,
    pub extinction_ratio: f64,
    /// Initial amplitude of the damped plateau ripple, relative to `on_level`.
    pub ripple_fraction: f64,
    /// Additive Gaussian noise, in intensity units.
    pub noise_sigma: f64,
    /// Off-level time before the rising and after the falling edge.
    pub padding: f64,
}

impl PulseShape {
    pub fn new(rise_time: f64, fall_time: f64, width: f64, on_level: f64, extinction_ratio: f64) -> Self {
        Self {
            rise_time,
            fall_time,
            width,
            on_level,
            extinction_ratio,
            ripple_fraction: 0.0,
            noise_sigma: 0.0,
            padding: width,
        }
    }
}

/// Pulse with error-function edges whose 10–90% spans equal the requested
/// rise and fall times, sitting on an off level of `on_level / ER`.
pub fn gen_pulse(shape: &PulseShape, sample_period: f64, seed: Seed) -> Result<PulseTrace> {
    ensure_positive("sample period", sample_period)?;
    ensure_positive("rise time", shape.rise_time)?;
    ensure_positive("fall time", shape.fall_time)?;
    ensure_positive("on level", shape.on_level)?;
    ensure_positive("padding", shape.padding)?;
    if shape.width <= shape.rise_time + shape.fall_time {
        return Err(Error::InvalidInput("pulse width must exceed rise + fall time".into()));
    }
    if !(shape.extinction_ratio > 1.0) {
        return Err(Error::InvalidInput("extinction ratio must exceed 1".into()));
    }
    ensure_finite("ripple fraction", &[shape.ripple_fraction])?;
    let normal = gaussian(shape.noise_sigma)?;
    let mut rng = rng(seed);

    let on = shape.on_level;
    let off = on / shape.extinction_ratio;
    let sigma_r = shape.rise_time / (2.0 * KNIFE_EDGE_10_90_FACTOR);
    let sigma_f = shape.fall_time / (2.0 * KNIFE_EDGE_10_90_FACTOR);
    let t_rise = shape.padding;
    let t_fall = t_rise + shape.width;
    let ripple_start = t_rise + KNIFE_EDGE_10_90_FACTOR * sigma_r;
    let quarter = 0.25 * (t_fall - KNIFE_EDGE_10_90_FACTOR * sigma_f - ripple_start);
    let n = ((t_fall + shape.padding) / sample_period).ceil() as usize + 1;

    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * sample_period;
            let up = 0.5 * libm::erfc(-(t - t_rise) / (sigma_r * SQRT_2));
            let down = 0.5 * libm::erfc((t - t_fall) / (sigma_f * SQRT_2));
            let mut v = off + (on - off) * up * down;
            if shape.ripple_fraction != 0.0 && t >= ripple_start && t < ripple_start + quarter {
                let s = (t - ripple_start) / quarter;
                v += shape.ripple_fraction * on * (-4.0 * s).exp() * (8.0 * PI * s).sin();
            }
            v + normal.sample(&mut rng)
        })
        .collect();
    Ok(PulseTrace::new(sample_period, samples)?.with_nominal_width(shape.width))
}

/// ODMR sweep of a single Lorentzian dip; frequencies and linewidth in Hz.
pub fn gen_odmr(
    baseline: f64,
    contrast: f64,
    center: f64,
    fwhm: f64,
    frequencies: &[f64],
    noise: Noise,
    seed: Seed,
) -> Result<OdmrSweep> {
    if !(0.0..1.0).contains(&contrast) {
        return Err(Error::InvalidInput(format!("contrast {contrast} outside [0, 1)")));
    }
    ensure_positive("linewidth", fwhm)?;
    let clean: Vec<f64> = frequencies.iter().map(|&f| lorentzian_dip(baseline, contrast, center, fwhm, f)).collect();
    let values = noise.apply_all(&clean, &mut rng(seed))?;
    OdmrSweep::new(frequencies.to_vec(), values)
}

/// NV⁻ zero-phonon line, nm.
pub const NV_MINUS_ZPL: f64 = 637.0;
/// NV⁰ zero-phonon line, nm.
pub const NV0_ZPL: f64 = 575.0;
const ZPL_SIGMA: f64 = 1.0;
const NV0_BAND_CENTER: f64 = 605.0;
const NV0_BAND_SIGMA: f64 = 18.0;

/// Noiseless NV⁻ emission: ZPL of height `zpl_weight` plus a unit phonon
/// sideband `u²·e^(−u)`, `u = (λ − 600)/50`, peaking at 700 nm.
pub fn nv_minus_emission(zpl_weight: f64, wavelength: f64) -> f64 {
    let zpl = zpl_weight * (-0.5 * ((wavelength - NV_MINUS_ZPL) / ZPL_SIGMA).powi(2)).exp();
    let u = (wavelength - 600.0) / 50.0;
    let sideband = if u > 0.0 { u * u * (-u).exp() } else { 0.0 };
    zpl + sideband
}

/// Noiseless NV⁰ emission scaled by `nv0_weight`: a 575 nm ZPL on a band
/// centred at 605 nm.
pub fn nv0_emission(nv0_weight: f64, wavelength: f64) -> f64 {
    let zpl = 0.2 * (-0.5 * ((wavelength - NV0_ZPL) / ZPL_SIGMA).powi(2)).exp();
    let band = (-0.5 * ((wavelength - NV0_BAND_CENTER) / NV0_BAND_SIGMA).powi(2)).exp();
    nv0_weight * (zpl + band)
}

/// Emission spectrum over `wavelength_grid` (nm) with multiplicative noise,
/// clipped at zero.
pub fn gen_spectrum(
    zpl_weight: f64,
    nv0_weight: f64,
    wavelength_grid: &[f64],
    noise_fraction: f64,
    seed: Seed,
) -> Result<Spectrum> {
    if !(zpl_weight >= 0.0 && nv0_weight >= 0.0) {
        return Err(Error::InvalidInput("spectral weights must be non-negative".into()));
    }
    let normal = gaussian(noise_fraction)?;
    let mut rng = rng(seed);
    let samples = wavelength_grid
        .iter()
        .map(|&wl| {
            let v = nv_minus_emission(zpl_weight, wl) + nv0_emission(nv0_weight, wl);
            (wl, (v * (1.0 + normal.sample(&mut rng))).max(0.0))
        })
        .collect();
    Spectrum::new(samples)
}
